// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C interface only.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drbfr/drbfr.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  drbfr_context* ctx = nullptr;
  explicit Context(const char* config = nullptr) { REQUIRE(drbfr_context_create(config, &ctx) == DRBFR_OK); }
  ~Context() { drbfr_context_destroy(ctx); }
  operator drbfr_context*() const { return ctx; }
};

json take(char* s) {
  REQUIRE(s != nullptr);
  auto j = json::parse(s);
  drbfr_string_free(s);
  return j;
}

// A corpus and models small enough to train in seconds.
std::string tiny_config(const fs::path& root) {
  json c{{"seed", 5},
         {"data", {{"root", root.string()}, {"image_size", 64}, {"patch_size", 16}, {"n_train", 6}, {"n_test", 3}}},
         {"drm", {{"d", 2}, {"l", 4}, {"channels", 2}, {"proj_dim", 8}, {"steps", 2}, {"batch", 3}}},
         {"latentae", {{"width", 8}, {"steps", 2}, {"batch", 2}, {"min_corpus", 2}}},
         {"ldrm", {{"T", 20}, {"width", 8}, {"steps", 2}, {"batch", 2}, {"sample_steps", 4}}},
         {"eval", {{"n_eval", 3}}}};
  return c.dump();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(drbfr_version()).size() > 0);
  CHECK(std::string(drbfr_status_name(DRBFR_OK)) == "ok");
  CHECK(std::string(drbfr_status_name(DRBFR_ERR_CONFIG)) == "configuration_error");
  CHECK(std::string(drbfr_status_name(DRBFR_ERR_INTERNAL)) == "internal_error");

  CHECK(drbfr_context_create(nullptr, nullptr) == DRBFR_ERR_ARGUMENT);
  CHECK(std::string(drbfr_last_error()).find("NULL") != std::string::npos);
  drbfr_context* ctx = nullptr;
  CHECK(drbfr_context_create("/nonexistent/config.json", &ctx) == DRBFR_ERR_CONFIG);
  CHECK(ctx == nullptr);
}

TEST_CASE("context configuration") {
  Context ctx;
  CHECK(drbfr_context_merge_config(ctx, R"({"drm": {"tau": 0.5}})") == DRBFR_OK);
  CHECK(drbfr_context_merge_config(ctx, R"({"drm": {"taux": 0.5}})") == DRBFR_ERR_CONFIG);
  CHECK(std::string(drbfr_last_error()).find("drm.taux") != std::string::npos);
  CHECK(drbfr_context_merge_config(ctx, "[1, 2]") == DRBFR_ERR_CONFIG);
  CHECK(drbfr_context_merge_config(ctx, "{oops") == DRBFR_ERR_CONFIG);
  CHECK(drbfr_context_set_seed(ctx, 77) == DRBFR_OK);
  CHECK(drbfr_context_set_checkpoint(ctx, "vae", "x") == DRBFR_ERR_ARGUMENT);
  char* text = nullptr;
  REQUIRE(drbfr_context_config_json(ctx, &text) == DRBFR_OK);
  const auto cfg = take(text);
  CHECK(cfg["seed"] == 77);
  CHECK(cfg["drm"]["tau"] == 0.5);
}

TEST_CASE("image helpers") {
  std::vector<float> px(8 * 8 * 3, 0.5f);
  drbfr_image* a = nullptr;
  drbfr_image* b = nullptr;
  REQUIRE(drbfr_image_create(8, 8, px.data(), &a) == DRBFR_OK);
  px[5] = 0.6f;
  REQUIRE(drbfr_image_create(8, 8, px.data(), &b) == DRBFR_OK);
  double v = 0;
  CHECK(drbfr_psnr(a, a, &v) == DRBFR_OK);
  CHECK(v == 99.0);
  CHECK(drbfr_psnr(a, b, &v) == DRBFR_OK);
  CHECK(v == doctest::Approx(10 * std::log10(192 / 0.01)).epsilon(1e-4));
  CHECK(drbfr_ssim(a, a, 7, &v) == DRBFR_OK);
  CHECK(v == 1.0);
  CHECK(drbfr_ssim(a, b, 4, &v) == DRBFR_ERR_ARGUMENT);
  CHECK(drbfr_image_create(0, 8, px.data(), &b) == DRBFR_ERR_ARGUMENT);

  drbfr_image* out = nullptr;
  CHECK(drbfr_degrade(a, 1.0, 2.0, 5.0, 80, 3, &out) == DRBFR_ERR_DEGRADATION);
  CHECK(out == nullptr);

  std::vector<float> big(32 * 32 * 3, 0.5f);
  drbfr_image* c = nullptr;
  REQUIRE(drbfr_image_create(32, 32, big.data(), &c) == DRBFR_OK);
  REQUIRE(drbfr_degrade(c, 0.1, 1.0, 0.0, 100, 3, &out) == DRBFR_OK);
  CHECK(drbfr_image_height(out) == 32);
  CHECK(std::abs(drbfr_image_data(out)[0] - 0.5f) <= 2.0f / 255.0f);

  drbfr::test::TempDir dir;
  const auto png = (dir.path() / "c.png").string();
  CHECK(drbfr_image_save_png(c, png.c_str()) == DRBFR_OK);
  drbfr_image* loaded = nullptr;
  CHECK(drbfr_image_load(png.c_str(), &loaded) == DRBFR_OK);
  CHECK(drbfr_image_width(loaded) == 32);
  CHECK(drbfr_image_load((dir.path() / "none.png").c_str(), &loaded) == DRBFR_ERR_DECODE);

  for (auto* img : {a, b, c, out}) drbfr_image_destroy(img);
  drbfr_image_destroy(loaded);
}

TEST_CASE("degrade command is idempotent and resumable") {
  drbfr::test::TempDir dir;
  const auto root = dir.path() / "corpus";
  Context ctx;
  REQUIRE(drbfr_context_merge_config(ctx, tiny_config(root).c_str()) == DRBFR_OK);
  char* out = nullptr;
  REQUIRE(drbfr_cmd_degrade(ctx, &out) == DRBFR_OK);
  const auto first = take(out);
  CHECK(first["splits"]["train"]["written"] == 6);
  CHECK(first["splits"]["test"]["written"] == 3);
  CHECK(fs::exists(root / "train" / "params" / "0.json"));
  const auto lq0 = slurp(root / "train" / "lq" / "0.png");

  REQUIRE(drbfr_cmd_degrade(ctx, &out) == DRBFR_OK);
  const auto second = take(out);
  CHECK(second["splits"]["train"]["written"] == 0);
  CHECK(second["splits"]["train"]["manifest_hash"] == first["splits"]["train"]["manifest_hash"]);
  CHECK(slurp(root / "train" / "lq" / "0.png") == lq0);

  fs::remove(root / "train" / "lq" / "2.png");
  CHECK(drbfr_cmd_degrade(ctx, nullptr) == DRBFR_ERR_DATA);
  CHECK(std::string(drbfr_last_error()).find("--resume") != std::string::npos);
  REQUIRE(drbfr_context_set_resume(ctx, 1) == DRBFR_OK);
  REQUIRE(drbfr_cmd_degrade(ctx, &out) == DRBFR_OK);
  CHECK(take(out)["splits"]["train"]["written"] == 1);

  REQUIRE(drbfr_context_set_seed(ctx, 6) == DRBFR_OK);
  CHECK(drbfr_cmd_degrade(ctx, nullptr) == DRBFR_ERR_DATA);
}

TEST_CASE("command pipeline") {
  drbfr::test::TempDir dir;
  const auto root = dir.path() / "corpus";
  const auto runs = (dir.path() / "runs").string();
  Context ctx;
  REQUIRE(drbfr_context_merge_config(ctx, tiny_config(root).c_str()) == DRBFR_OK);
  REQUIRE(drbfr_context_set_out(ctx, runs.c_str()) == DRBFR_OK);
  std::vector<std::string> lines;
  drbfr_context_set_log(
      ctx, [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }, &lines);

  REQUIRE(drbfr_context_set_out(ctx, "") == DRBFR_OK);
  REQUIRE(drbfr_cmd_degrade(ctx, nullptr) == DRBFR_OK);
  REQUIRE(drbfr_context_set_out(ctx, runs.c_str()) == DRBFR_OK);

  CHECK(drbfr_cmd_train_ldm(ctx, nullptr) == DRBFR_ERR_CONFIG);
  CHECK(std::string(drbfr_last_error()) == "missing: ae");
  CHECK(drbfr_cmd_eval(ctx, "fid", nullptr) == DRBFR_ERR_USAGE);
  CHECK(drbfr_cmd_eval(ctx, "dr-recon", nullptr) == DRBFR_ERR_CONFIG);

  char* out = nullptr;
  REQUIRE(drbfr_cmd_train_ae(ctx, &out) == DRBFR_OK);
  const auto ae = take(out);
  CHECK(ae["steps"] == 2);
  CHECK(fs::exists(fs::path(ae["run_dir"].get<std::string>()) / "loss.csv"));
  CHECK(fs::exists(fs::path(ae["run_dir"].get<std::string>()) / "config.json"));
  const auto ae_path = ae["checkpoint"].get<std::string>();
  REQUIRE(drbfr_context_set_checkpoint(ctx, "ae", ae_path.c_str()) == DRBFR_OK);

  CHECK(drbfr_cmd_train_ldm(ctx, nullptr) == DRBFR_ERR_CONFIG);
  CHECK(std::string(drbfr_last_error()) == "missing: drm");

  REQUIRE(drbfr_cmd_train_drm(ctx, &out) == DRBFR_OK);
  const auto drm_path = take(out)["checkpoint"].get<std::string>();
  REQUIRE(drbfr_context_set_checkpoint(ctx, "drm", drm_path.c_str()) == DRBFR_OK);
  REQUIRE(drbfr_cmd_train_ldm(ctx, &out) == DRBFR_OK);
  const auto ldm = take(out);
  CHECK(ldm["checkpoint_hash"].get<std::string>().size() == 16);
  const auto ldm_path = ldm["checkpoint"].get<std::string>();
  REQUIRE(drbfr_context_set_checkpoint(ctx, "ldm", ldm_path.c_str()) == DRBFR_OK);
  CHECK_FALSE(lines.empty());

  const auto restored = dir.path() / "restored";
  const auto input = (root / "test" / "lq").string();
  REQUIRE(drbfr_cmd_restore(ctx, input.c_str(), restored.c_str(), 0, &out) == DRBFR_OK);
  const auto report = take(out);
  CHECK(report["images"].size() == 3);
  CHECK(report["images"][0]["seed"] == 5);
  CHECK(report["checkpoint_hashes"].contains("drm"));
  CHECK(fs::exists(restored / "0.png"));
  CHECK(json::parse(slurp(restored / "report.json")) == report);

  // A different AE breaks the recorded hash chain.
  REQUIRE(drbfr_context_merge_config(ctx, R"({"latentae": {"steps": 3}})") == DRBFR_OK);
  REQUIRE(drbfr_cmd_train_ae(ctx, &out) == DRBFR_OK);
  const auto ae3 = take(out)["checkpoint"].get<std::string>();
  REQUIRE(drbfr_context_set_checkpoint(ctx, "ae", ae3.c_str()) == DRBFR_OK);
  CHECK(drbfr_cmd_restore(ctx, input.c_str(), restored.c_str(), 0, nullptr) == DRBFR_ERR_HASH_MISMATCH);
  CHECK(drbfr_cmd_restore(ctx, input.c_str(), restored.c_str(), 1, nullptr) == DRBFR_OK);
  REQUIRE(drbfr_context_set_checkpoint(ctx, "ae", ae_path.c_str()) == DRBFR_OK);

  REQUIRE(drbfr_cmd_eval(ctx, "dr-recon", &out) == DRBFR_OK);
  CHECK(fs::exists(fs::path(take(out)["run_dir"].get<std::string>()) / "dr_recon.csv"));
  REQUIRE(drbfr_cmd_eval(ctx, "restore-metrics", &out) == DRBFR_OK);
  const auto metrics = take(out);
  CHECK(fs::exists(fs::path(metrics["run_dir"].get<std::string>()) / "metrics.csv"));
  CHECK(fs::exists(fs::path(metrics["run_dir"].get<std::string>()) / "per_image.csv"));
  // The random-mode corpus has no class labels.
  CHECK(drbfr_cmd_eval(ctx, "dr-separability", nullptr) == DRBFR_ERR_DATA);
}

TEST_CASE("ablation command") {
  drbfr::test::TempDir dir;
  const auto root = dir.path() / "corpus";
  Context ctx;
  REQUIRE(drbfr_context_merge_config(ctx, tiny_config(root).c_str()) == DRBFR_OK);
  REQUIRE(drbfr_cmd_degrade(ctx, nullptr) == DRBFR_OK);
  REQUIRE(drbfr_context_set_out(ctx, (dir.path() / "runs").c_str()) == DRBFR_OK);
  char* out = nullptr;
  REQUIRE(drbfr_cmd_train_ae(ctx, &out) == DRBFR_OK);
  const auto ae = take(out)["checkpoint"].get<std::string>();
  REQUIRE(drbfr_context_set_checkpoint(ctx, "ae", ae.c_str()) == DRBFR_OK);

  REQUIRE(drbfr_context_merge_config(ctx, R"({"eval": {"ablation_budget": 5}})") == DRBFR_OK);
  CHECK(drbfr_cmd_eval(ctx, "ablation", nullptr) == DRBFR_ERR_CONFIG);
  CHECK(std::string(drbfr_last_error()).find("DR-ALL") != std::string::npos);

  REQUIRE(drbfr_context_merge_config(
              ctx, R"({"eval": {"ablation_budget": 100, "ablation_drm_steps": 2, "ablation_ldm_steps": 2,
                                 "metrics": ["psnr"]}})") == DRBFR_OK);
  REQUIRE(drbfr_cmd_eval(ctx, "ablation", &out) == DRBFR_OK);
  const auto report = take(out);
  const auto csv = slurp(fs::path(report["run_dir"].get<std::string>()) / "ablation.csv");
  CHECK(csv.rfind("variant,metric,mean,std,n,checkpoint_hash\n", 0) == 0);
  int rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 5);
  for (const char* v : {"DR-None,", "DR-CL,", "DR-REC,", "DR-ALL,"}) CHECK(csv.find(v) != std::string::npos);
}
