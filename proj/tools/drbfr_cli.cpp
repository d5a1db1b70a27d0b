// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "drbfr/drbfr.h"

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::string out;
  std::string ae, drm, ldm;
  std::string input, output;
  bool allow_hash_mismatch = false;
  std::string kind;
  std::string path;
  bool quiet = false;
};

int fail(drbfr_status status, const std::string& message) {
  nlohmann::json err{{"error", drbfr_status_name(status)}, {"status", static_cast<int>(status)}, {"message", message}};
  std::cerr << err.dump() << std::endl;
  return static_cast<int>(status);
}

void log_line(const char* line, void*) { std::cerr << line << std::endl; }

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "JSON run config (defaults when omitted)");
  cmd->add_option("--seed", a.seed, "Override the config seed");
  cmd->add_flag("--resume", a.resume, "Continue a partial corpus");
  cmd->add_option("--out", a.out, "Output root");
  cmd->add_flag("-q,--quiet", a.quiet, "No progress lines on stderr");
}

void add_checkpoints(CLI::App* cmd, Args& a) {
  cmd->add_option("--ae", a.ae, "Autoencoder checkpoint (overrides the config)");
  cmd->add_option("--drm", a.drm, "DRM checkpoint (overrides the config)");
  cmd->add_option("--ldm", a.ldm, "LDM checkpoint (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drbfr: degradation-representation guided blind face restoration"};
  app.require_subcommand(1);
  Args a;

  auto* init = app.add_subcommand("init-config", "Write the default config");
  add_common(init, a);
  init->add_option("path", a.path, "Config file to write")->required();

  auto* degrade = app.add_subcommand("degrade", "Generate the LQ/HQ corpus");
  add_common(degrade, a);

  auto* train_drm = app.add_subcommand("train-drm", "Train the degradation representation module");
  add_common(train_drm, a);
  auto* train_ae = app.add_subcommand("train-ae", "Train the latent autoencoder");
  add_common(train_ae, a);
  auto* train_ldm = app.add_subcommand("train-ldm", "Train the latent diffusion restorer");
  add_common(train_ldm, a);
  add_checkpoints(train_ldm, a);

  auto* restore = app.add_subcommand("restore", "Restore one LQ image or a directory of them");
  add_common(restore, a);
  add_checkpoints(restore, a);
  restore->add_option("--input", a.input, "LQ image or directory")->required();
  restore->add_option("--output", a.output, "Output directory")->required();
  restore->add_flag("--allow-hash-mismatch", a.allow_hash_mismatch, "Load checkpoints whose hash chain disagrees");

  auto* eval = app.add_subcommand("eval", "Evaluate trained models");
  add_common(eval, a);
  add_checkpoints(eval, a);
  eval->add_option("kind", a.kind, "dr-recon | dr-separability | restore-metrics | ablation")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(DRBFR_ERR_USAGE, e.what());
  }

  drbfr_context* ctx = nullptr;
  drbfr_status st = drbfr_context_create(a.config.empty() ? nullptr : a.config.c_str(), &ctx);
  if (st != DRBFR_OK) return fail(st, drbfr_last_error());
  std::string setup_error;
  const auto check = [&](drbfr_status s) {
    if (s != DRBFR_OK && st == DRBFR_OK) {
      st = s;
      setup_error = drbfr_last_error();
    }
  };
  if (a.seed) check(drbfr_context_set_seed(ctx, *a.seed));
  check(drbfr_context_set_resume(ctx, a.resume ? 1 : 0));
  check(drbfr_context_set_out(ctx, a.out.c_str()));
  if (!a.ae.empty()) check(drbfr_context_set_checkpoint(ctx, "ae", a.ae.c_str()));
  if (!a.drm.empty()) check(drbfr_context_set_checkpoint(ctx, "drm", a.drm.c_str()));
  if (!a.ldm.empty()) check(drbfr_context_set_checkpoint(ctx, "ldm", a.ldm.c_str()));
  if (!a.quiet) check(drbfr_context_set_log(ctx, log_line, nullptr));

  char* summary = nullptr;
  if (st == DRBFR_OK) {
    if (init->parsed())
      st = drbfr_cmd_init_config(ctx, a.path.c_str(), &summary);
    else if (degrade->parsed())
      st = drbfr_cmd_degrade(ctx, &summary);
    else if (train_drm->parsed())
      st = drbfr_cmd_train_drm(ctx, &summary);
    else if (train_ae->parsed())
      st = drbfr_cmd_train_ae(ctx, &summary);
    else if (train_ldm->parsed())
      st = drbfr_cmd_train_ldm(ctx, &summary);
    else if (restore->parsed())
      st = drbfr_cmd_restore(ctx, a.input.c_str(), a.output.c_str(), a.allow_hash_mismatch ? 1 : 0, &summary);
    else if (eval->parsed())
      st = drbfr_cmd_eval(ctx, a.kind.c_str(), &summary);
  }
  int code = 0;
  if (st != DRBFR_OK) {
    code = fail(st, setup_error.empty() ? drbfr_last_error() : setup_error);
  } else if (summary != nullptr) {
    std::cout << summary << std::endl;
  }
  drbfr_string_free(summary);
  drbfr_context_destroy(ctx);
  return code;
}
