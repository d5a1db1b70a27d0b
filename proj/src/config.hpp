// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "manifest.hpp"

namespace drbfr {

struct DataConfig {
  std::string source = "toy";  // "toy" or a directory of HQ images
  std::string root = "corpus";  // holds train/ and test/ splits
  int image_size = 64;
  int patch_size = 32;
  int n_train = 720;
  int n_test = 150;
};

struct DegradeConfig {
  std::string mode = "random";  // "random" | "classes"
  bool allow_override = false;
  DegradationRanges ranges = standard_ranges();
  std::vector<DegradationClass> classes = default_degradation_classes();

  /// blur-heavy / noise-heavy / jpeg-heavy. The JPEG class needs allow_override.
  static std::vector<DegradationClass> default_degradation_classes();
};

struct DrmConfig {
  int d = 4;
  int l = 64;
  int channels = 16;
  int proj_dim = 128;
  double tau = 0.07;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  double recon_weight = 1.0;
  bool symmetric_recon = true;
  bool hard_negatives = true;  // batch every degraded version of a sampled content together
  double lr = 2e-4;
  int steps = 2000;
  int batch = 16;
};

struct AeConfig {
  std::string mode = "continuous";  // "continuous" | "quantized"
  int factor = 4;
  int channels = 4;
  int width = 32;
  int codebook_size = 256;
  double commitment = 0.25;
  double lr = 1e-3;
  int steps = 3000;
  int batch = 8;
  int min_corpus = 100;
  bool allow_small_corpus = false;
};

struct LdmConfig {
  int T = 400;
  std::string schedule = "linear";  // "linear" | "cosine"
  std::string sampler = "ddim";     // "ddim" | "ddpm"
  int sample_steps = 50;
  std::string dr_attn = "all_levels";  // "all_levels" | "input_only"
  bool use_dr = true;
  int width = 32;
  double lr = 5e-4;
  int steps = 4000;
  int batch = 16;
};

struct EvalConfig {
  std::vector<std::string> metrics{"psnr", "ssim"};
  std::vector<std::string> ablation_variants{"DR-None", "DR-CL", "DR-REC", "DR-ALL"};
  int n_eval = 100;
  int ssim_window = 7;
  int ablation_drm_steps = 2000;
  int ablation_ldm_steps = 4000;
  long ablation_budget = 1000000;  // total optimizer steps the harness may spend
  bool ablation_parallel = false;
};

struct CheckpointPaths {
  std::string ae;
  std::string drm;
  std::string ldm;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  DegradeConfig degrade;
  DrmConfig drm;
  AeConfig latentae;
  LdmConfig ldrm;
  EvalConfig eval;
  CheckpointPaths checkpoints;

  nlohmann::json to_json() const;
  /// Missing keys take defaults; unknown keys raise ConfigError.
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Short SHA-256 of the canonical JSON form.
  std::string hash() const;
  /// Field-level sanity (positive sizes, known enum strings, legal ranges).
  void validate() const;

  ManifestSpec manifest_spec(const std::string& split, int n, std::uint64_t seed) const;
};

void to_json(nlohmann::json& j, const ParamRange& r);
void from_json(const nlohmann::json& j, ParamRange& r);
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DegradationRanges, sigma, r, delta, q)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DegradationClass, name, ranges)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataConfig, source, root, image_size, patch_size, n_train, n_test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DegradeConfig, mode, allow_override, ranges, classes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DrmConfig, d, l, channels, proj_dim, tau, lambda1, lambda2,
                                   recon_weight, symmetric_recon, hard_negatives, lr, steps, batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AeConfig, mode, factor, channels, width, codebook_size,
                                   commitment, lr, steps, batch, min_corpus, allow_small_corpus)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LdmConfig, T, schedule, sampler, sample_steps, dr_attn, use_dr,
                                   width, lr, steps, batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalConfig, metrics, ablation_variants, n_eval, ssim_window,
                                   ablation_drm_steps, ablation_ldm_steps, ablation_budget,
                                   ablation_parallel)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CheckpointPaths, ae, drm, ldm)

/// First 16 hex chars of SHA-256.
std::string short_sha256(const void* data, std::size_t size);
std::string short_sha256(const std::string& text);
std::string file_hash(const std::filesystem::path& path);

}  // namespace drbfr
