// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "drm.hpp"
#include "latentae.hpp"
#include "ldrm.hpp"
#include "metrics.hpp"

namespace drbfr::eval {

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::string run_id;
  std::string checkpoint_hash;
};

MetricReport score_images(const std::vector<ImageTensor>& outputs, const std::vector<ImageTensor>& references,
                          int ssim_window);

/// Restores the first n LQ images of the corpus (image i with seed + i) and scores them against HQ.
MetricReport restore_metrics(const ldm::RestorationModels& models, const PairCorpus& corpus, int n,
                             ldm::Sampler sampler, int steps, std::uint64_t seed, int ssim_window);

/// Reference row: PSNR/SSIM of the LQ inputs themselves against HQ.
MetricReport lq_metrics(const PairCorpus& corpus, int n, int ssim_window);

/// LQ-patch reconstruction through G_LQ. For image i, the DR comes from LQ patch
/// p1, G_LQ is applied to the HQ patch r2, and the result is compared with p2.
/// The swap uses the DR of the next image with a different class label.
struct DrReconReport {
  int n = 0;
  double baseline_psnr = 0.0;  // PSNR(r2, p2)
  double recon_psnr = 0.0;     // PSNR(G_LQ(r2, DR(p1)), p2)
  double swap_psnr = 0.0;      // PSNR(G_LQ(r2, DR(p1 of a mismatched image)), p2)
};
DrReconReport dr_recon(const drm::DRModel& model, const PairCorpus& corpus, int n, std::uint64_t seed);

/// Silhouette of image-level DRs under the "degradation" and "content" labelings.
SeparabilityReport separability(const drm::DRModel& model, const PairCorpus& corpus, bool embed);

struct AblationRow {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
  std::string checkpoint_hash;
};

struct AblationOptions {
  std::vector<std::string> variants{"DR-None", "DR-CL", "DR-REC", "DR-ALL"};
  std::vector<std::string> metrics{"psnr", "ssim"};
  int drm_steps = 2000;
  int ldm_steps = 4000;
  long budget = 1000000;
  int n_eval = 100;
  int ssim_window = 7;
  ldm::Sampler sampler = ldm::Sampler::kDdim;
  int sample_steps = 50;
  std::uint64_t seed = 0;
  bool parallel = false;
  /// Variant checkpoints are stored here and reused when their key matches.
  std::filesystem::path work_dir;
  /// Identifies the training corpus in the checkpoint keys.
  std::string corpus_id;
  std::function<void(const std::string&)> log;
};

/// Optimizer steps needed for the given variants.
long required_ablation_steps(const std::vector<std::string>& variants, int drm_steps, int ldm_steps);

/// Drm config for a variant: DR-CL keeps only the contrastive term, DR-REC only
/// the reconstruction term, DR-ALL is unchanged. DR-None has no DRM.
DrmConfig variant_drm_config(const DrmConfig& base, const std::string& variant);

struct CachedDrm {
  drm::DRModel model;
  std::filesystem::path path;
};
struct CachedLdm {
  ldm::DiffusionModel model;
  std::filesystem::path path;
};

/// Loads `<work_dir>/drm-<key>.ckpt` when present, else trains and stores it.
/// The key covers the config, patch size, seed, and corpus id.
CachedDrm train_or_load_drm(const PairCorpus& train, const DrmConfig& cfg, int patch_size, std::uint64_t seed,
                            const std::filesystem::path& work_dir, const std::string& corpus_id,
                            const nn::ProgressFn& progress = {});
/// Same for the LDM; the key also covers the AE and DRM checkpoint hashes.
CachedLdm train_or_load_ldm(const PairCorpus& train, const latent::AutoencoderModel& ae, const std::string& ae_hash,
                            const CachedDrm* drm, const LdmConfig& cfg, std::array<int, 2> dr_shape,
                            std::uint64_t seed, const std::filesystem::path& work_dir, const std::string& corpus_id,
                            const nn::ProgressFn& progress = {});

/// Trains (or reloads) every variant with shared seeds and scores it on the first
/// n_eval test images with shared sampler seeds.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const PairCorpus& train, const PairCorpus& test,
                                      const latent::AutoencoderModel& ae, const std::string& ae_hash,
                                      const AblationOptions& options);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

}  // namespace drbfr::eval
