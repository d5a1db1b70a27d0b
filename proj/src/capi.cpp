// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "drbfr/drbfr.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <optional>
#include <string>

#include "commands.hpp"
#include "config.hpp"
#include "degrade.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "metrics.hpp"

struct drbfr_context {
  drbfr::RunConfig config;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::string out;
  drbfr_log_fn log_fn = nullptr;
  void* log_user = nullptr;

  drbfr::cmd::CommonOptions options() const {
    drbfr::cmd::CommonOptions o;
    o.seed = seed;
    o.resume = resume;
    o.out = out;
    if (log_fn) {
      auto fn = log_fn;
      auto user = log_user;
      o.log = [fn, user](const std::string& line) { fn(line.c_str(), user); };
    }
    return o;
  }
};

struct drbfr_image {
  drbfr::ImageTensor image;
};

namespace {

thread_local std::string g_last_error;

template <class F>
drbfr_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return DRBFR_OK;
  } catch (const drbfr::Error& e) {
    g_last_error = e.what();
    return static_cast<drbfr_status>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DRBFR_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DRBFR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DRBFR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DRBFR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw drbfr::ArgumentError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(const nlohmann::json& j, char** out_json) {
  if (out_json != nullptr) *out_json = dup_string(j.dump(2));
}

}  // namespace

extern "C" {

const char* drbfr_version(void) { return "0.1.0"; }

const char* drbfr_status_name(drbfr_status status) {
  if (status == DRBFR_OK) return "ok";
  if (status == DRBFR_ERR_INTERNAL) return "internal_error";
  return drbfr::error_kind_name(static_cast<drbfr::ErrorKind>(status));
}

const char* drbfr_last_error(void) { return g_last_error.c_str(); }

void drbfr_string_free(char* s) { std::free(s); }

drbfr_status drbfr_context_create(const char* config_path, drbfr_context** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto ctx = std::make_unique<drbfr_context>();
    if (config_path != nullptr && *config_path != '\0') ctx->config = drbfr::RunConfig::load(config_path);
    *out = ctx.release();
  });
}

void drbfr_context_destroy(drbfr_context* ctx) { delete ctx; }

drbfr_status drbfr_context_set_seed(drbfr_context* ctx, uint64_t seed) {
  return guarded([&] {
    require(ctx, "ctx");
    ctx->seed = seed;
  });
}

drbfr_status drbfr_context_set_resume(drbfr_context* ctx, int resume) {
  return guarded([&] {
    require(ctx, "ctx");
    ctx->resume = resume != 0;
  });
}

drbfr_status drbfr_context_set_out(drbfr_context* ctx, const char* path) {
  return guarded([&] {
    require(ctx, "ctx");
    ctx->out = path ? path : "";
  });
}

drbfr_status drbfr_context_set_checkpoint(drbfr_context* ctx, const char* stage, const char* path) {
  return guarded([&] {
    require(ctx, "ctx");
    require(stage, "stage");
    const std::string s = stage;
    const std::string p = path ? path : "";
    if (s == "ae")
      ctx->config.checkpoints.ae = p;
    else if (s == "drm")
      ctx->config.checkpoints.drm = p;
    else if (s == "ldm")
      ctx->config.checkpoints.ldm = p;
    else
      throw drbfr::ArgumentError("unknown checkpoint stage '" + s + "'");
  });
}

drbfr_status drbfr_context_merge_config(drbfr_context* ctx, const char* json_text) {
  return guarded([&] {
    require(ctx, "ctx");
    require(json_text, "json_text");
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw drbfr::ConfigError(std::string("config patch is not valid JSON: ") + e.what());
    }
    if (!patch.is_object()) throw drbfr::ConfigError("config patch must be a JSON object");
    auto merged = ctx->config.to_json();
    merged.merge_patch(patch);
    ctx->config = drbfr::RunConfig::from_json(merged);
  });
}

drbfr_status drbfr_context_set_log(drbfr_context* ctx, drbfr_log_fn fn, void* user) {
  return guarded([&] {
    require(ctx, "ctx");
    ctx->log_fn = fn;
    ctx->log_user = user;
  });
}

drbfr_status drbfr_context_config_json(const drbfr_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(out_json, "out_json");
    auto cfg = ctx->config;
    if (ctx->seed) cfg.seed = *ctx->seed;
    *out_json = dup_string(cfg.to_json().dump(2));
  });
}

drbfr_status drbfr_image_create(int height, int width, const float* hwc, drbfr_image** out) {
  return guarded([&] {
    require(out, "out");
    require(hwc, "hwc");
    *out = nullptr;
    if (height <= 0 || width <= 0) throw drbfr::ArgumentError("image dimensions must be positive");
    const auto n = static_cast<std::size_t>(height) * width * 3;
    *out = new drbfr_image{drbfr::ImageTensor(height, width, std::vector<float>(hwc, hwc + n))};
  });
}

drbfr_status drbfr_image_load(const char* path, drbfr_image** out) {
  return guarded([&] {
    require(out, "out");
    require(path, "path");
    *out = nullptr;
    *out = new drbfr_image{drbfr::load_image(path)};
  });
}

void drbfr_image_destroy(drbfr_image* image) { delete image; }

int drbfr_image_height(const drbfr_image* image) { return image ? image->image.height() : 0; }

int drbfr_image_width(const drbfr_image* image) { return image ? image->image.width() : 0; }

const float* drbfr_image_data(const drbfr_image* image) { return image ? image->image.data().data() : nullptr; }

drbfr_status drbfr_image_save_png(const drbfr_image* image, const char* path) {
  return guarded([&] {
    require(image, "image");
    require(path, "path");
    drbfr::save_png(image->image, path);
  });
}

drbfr_status drbfr_degrade(const drbfr_image* hq, double sigma, double r, double delta, int q, uint64_t seed,
                           drbfr_image** out) {
  return guarded([&] {
    require(hq, "hq");
    require(out, "out");
    *out = nullptr;
    drbfr::DegradationParams params{sigma, r, delta, q, seed};
    *out = new drbfr_image{drbfr::apply_degradation(hq->image, params)};
  });
}

drbfr_status drbfr_psnr(const drbfr_image* a, const drbfr_image* b, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = drbfr::psnr(a->image, b->image);
  });
}

drbfr_status drbfr_ssim(const drbfr_image* a, const drbfr_image* b, int window, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = drbfr::ssim(a->image, b->image, window);
  });
}

drbfr_status drbfr_cmd_init_config(const drbfr_context* ctx, const char* path, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(path, "path");
    emit(drbfr::cmd::init_config(path, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_degrade(const drbfr_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    emit(drbfr::cmd::degrade(ctx->config, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_train_drm(const drbfr_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    emit(drbfr::cmd::train_drm(ctx->config, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_train_ae(const drbfr_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    emit(drbfr::cmd::train_ae(ctx->config, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_train_ldm(const drbfr_context* ctx, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    emit(drbfr::cmd::train_ldm(ctx->config, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_restore(const drbfr_context* ctx, const char* input, const char* output,
                               int allow_hash_mismatch, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(input, "input");
    require(output, "output");
    drbfr::cmd::RestoreOptions r;
    r.input = input;
    r.output = output;
    r.allow_hash_mismatch = allow_hash_mismatch != 0;
    emit(drbfr::cmd::restore(ctx->config, r, ctx->options()), out_json);
  });
}

drbfr_status drbfr_cmd_eval(const drbfr_context* ctx, const char* kind, char** out_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(kind, "kind");
    emit(drbfr::cmd::evaluate(ctx->config, kind, ctx->options()), out_json);
  });
}

}  // extern "C"
