// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "errors.hpp"

namespace drbfr {

using nlohmann::json;

void to_json(json& j, const ParamRange& r) { j = json::array({r.lo, r.hi}); }
void from_json(const json& j, ParamRange& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be a [lo, hi] pair");
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}
std::vector<DegradationClass> DegradeConfig::default_degradation_classes() {
  return {
      {"blur", {{2.5, 5.0}, {1.0, 1.5}, {0.0, 3.0}, {85.0, 100.0}}},
      {"noise", {{0.1, 1.0}, {1.0, 1.5}, {12.0, 20.0}, {85.0, 100.0}}},
      {"jpeg", {{0.1, 1.0}, {1.0, 1.5}, {0.0, 3.0}, {10.0, 25.0}}},
  };
}

json RunConfig::to_json() const {
  return json{{"seed", seed},         {"data", data},           {"degrade", degrade},
              {"drm", drm},           {"latentae", latentae},   {"ldrm", ldrm},
              {"eval", eval},         {"checkpoints", checkpoints}};
}

namespace {

// Overlays `user` onto `base`; objects recurse, everything else is replaced.
void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    if (base[key].is_object())
      overlay(base[key], value, where);
    else
      base[key] = value;
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
  json merged = RunConfig{}.to_json();
  overlay(merged, doc, "");
  RunConfig cfg;
  try {
    cfg.seed = merged.at("seed").get<std::uint64_t>();
    merged.at("data").get_to(cfg.data);
    merged.at("degrade").get_to(cfg.degrade);
    merged.at("drm").get_to(cfg.drm);
    merged.at("latentae").get_to(cfg.latentae);
    merged.at("ldrm").get_to(cfg.ldrm);
    merged.at("eval").get_to(cfg.eval);
    merged.at("checkpoints").get_to(cfg.checkpoints);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

std::string RunConfig::hash() const { return short_sha256(to_json().dump()); }

void RunConfig::validate() const {
  require(data.image_size >= 32, "data.image_size must be >= 32");
  require(data.patch_size >= 8 && data.patch_size <= data.image_size, "data.patch_size must lie in [8, image_size]");
  require(data.n_train >= 1 && data.n_test >= 1, "data.n_train and data.n_test must be >= 1");
  require(degrade.mode == "random" || degrade.mode == "classes", "degrade.mode must be random|classes");
  try {
    validate_ranges(degrade.ranges, degrade.allow_override);
    if (degrade.mode == "classes") {
      require(degrade.classes.size() >= 2, "degrade.classes needs >= 2 entries");
      for (const auto& c : degrade.classes) validate_ranges(c.ranges, degrade.allow_override);
    }
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("invalid config: degrade ranges: ") + e.what());
  }
  require(drm.d >= 1 && drm.l >= 1 && drm.channels >= 1 && drm.proj_dim >= 1, "drm sizes must be positive");
  require(drm.tau > 0 && drm.lambda1 >= 0 && drm.lambda2 >= 0 && drm.recon_weight >= 0,
          "drm loss weights must be non-negative and tau positive");
  require(drm.batch >= 2, "drm.batch must be >= 2");
  require(drm.steps >= 0 && drm.lr > 0, "drm.steps >= 0 and drm.lr > 0");
  require(latentae.mode == "continuous" || latentae.mode == "quantized", "latentae.mode must be continuous|quantized");
  require(latentae.factor == 1 || latentae.factor == 2 || latentae.factor == 4 || latentae.factor == 8,
          "latentae.factor must be 1, 2, 4 or 8");
  require(latentae.channels >= 1 && latentae.width >= 4 && latentae.codebook_size >= 2, "latentae sizes");
  require(latentae.batch >= 1 && latentae.steps >= 0 && latentae.lr > 0, "latentae optimizer settings");
  require(data.image_size % data.patch_size == 0, "data.image_size must be a multiple of data.patch_size");
  require(data.image_size % (4 * latentae.factor) == 0, "data.image_size must be divisible by 4 * latentae.factor");
  require(ldrm.T >= 2, "ldrm.T must be >= 2");
  require(ldrm.schedule == "linear" || ldrm.schedule == "cosine", "ldrm.schedule must be linear|cosine");
  require(ldrm.sampler == "ddim" || ldrm.sampler == "ddpm", "ldrm.sampler must be ddim|ddpm");
  require(ldrm.sample_steps >= 1 && ldrm.sample_steps <= ldrm.T, "ldrm.sample_steps must lie in [1, T]");
  require(ldrm.dr_attn == "all_levels" || ldrm.dr_attn == "input_only", "ldrm.dr_attn must be all_levels|input_only");
  require(ldrm.width >= 8 && ldrm.width % 8 == 0, "ldrm.width must be a positive multiple of 8");
  require(ldrm.batch >= 1 && ldrm.steps >= 0 && ldrm.lr > 0, "ldrm optimizer settings");
  require(eval.n_eval >= 1 && eval.ssim_window >= 1 && eval.ssim_window % 2 == 1, "eval sizes");
  for (const auto& v : eval.ablation_variants)
    require(v == "DR-None" || v == "DR-CL" || v == "DR-REC" || v == "DR-ALL", "unknown ablation variant " + v);
  for (const auto& m : eval.metrics) require(m == "psnr" || m == "ssim", "unknown metric " + m);
}

ManifestSpec RunConfig::manifest_spec(const std::string& split, int n, std::uint64_t manifest_seed) const {
  ManifestSpec spec;
  spec.source = data.source;
  spec.split = split;
  spec.image_size = data.image_size;
  spec.n = n;
  spec.allow_override = degrade.allow_override;
  spec.seed = manifest_seed;
  if (degrade.mode == "classes") {
    spec.classes = degrade.classes;
    spec.class_structured = true;
  } else {
    spec.classes = {{"standard", degrade.ranges}};
  }
  return spec;
}

std::string short_sha256(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < 8 && i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string short_sha256(const std::string& text) { return short_sha256(text.data(), text.size()); }

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return short_sha256(ss.str());
}

}  // namespace drbfr
