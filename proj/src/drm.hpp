// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "config.hpp"
#include "dataset.hpp"
#include "nn_common.hpp"

namespace drbfr::drm {

/// VGG-style stack of 3x3 convolutions and pooling, global average pooling,
/// then an MLP head emitting d tokens of dimension l. Input (B, 3, P, P) with P
/// divisible by 4; output (B, d, l).
struct DREncoderImpl : torch::nn::Module {
  DREncoderImpl(int channels, int d, int l);
  torch::Tensor forward(const torch::Tensor& x);

  int d, l;
  torch::nn::Sequential features{nullptr};
  torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(DREncoder);

/// Two-layer MLP onto the unit sphere.
struct ProjectionHeadImpl : torch::nn::Module {
  ProjectionHeadImpl(int in_features, int proj_dim);
  torch::Tensor forward(const torch::Tensor& features);  // (B, d, l) -> (B, proj_dim)

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ProjectionHead);

/// Instance normalization followed by a per-channel (scale, shift) predicted
/// from the flattened DR: scale = 1 + A_s f, shift = A_b f.
struct AdaINImpl : torch::nn::Module {
  AdaINImpl(int channels, int dr_features);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& dr_flat);
  /// (scale, shift), each (B, C).
  std::pair<torch::Tensor, torch::Tensor> modulation(const torch::Tensor& dr_flat);

  int channels;
  double eps = 1e-5;
  torch::nn::Linear affine{nullptr};
};
TORCH_MODULE(AdaIN);

/// Encoder-decoder UNet over HQ patches whose decoder normalizations are AdaIN
/// layers driven by the DR. Predicts a residual added to the HQ input; output clamped to [0, 1].
struct LQGeneratorImpl : torch::nn::Module {
  LQGeneratorImpl(int channels, int d, int l);
  torch::Tensor forward(const torch::Tensor& hq, const torch::Tensor& dr);

  torch::nn::Conv2d e1a{nullptr}, e1b{nullptr}, e2a{nullptr}, e2b{nullptr}, e3a{nullptr}, e3b{nullptr};
  torch::nn::Conv2d d2a{nullptr}, d2b{nullptr}, d1a{nullptr}, d1b{nullptr}, out{nullptr};
  AdaIN n2a{nullptr}, n2b{nullptr}, n1a{nullptr}, n1b{nullptr};
};
TORCH_MODULE(LQGenerator);

struct DRMLossWeights {
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  double tau = 0.07;
  double recon = 1.0;  // 0 drops the reconstruction term (contrastive-only ablation)
};

/// Encoder, projector, and generator trained together.
class DRModel {
 public:
  DRModel(const DrmConfig& cfg, int patch_size);

  DREncoder encoder{nullptr};
  ProjectionHead projector{nullptr};
  LQGenerator generator{nullptr};

  const DrmConfig& config() const noexcept { return cfg_; }
  int patch_size() const noexcept { return patch_size_; }
  std::vector<torch::Tensor> parameters() const;
  void to(torch::Dtype dtype);
  void train(bool on);

  Checkpoint to_checkpoint(const std::string& config_hash, std::int64_t step) const;
  static DRModel from_checkpoint(const Checkpoint& ck);

 private:
  DrmConfig cfg_;
  int patch_size_;
};

/// E_DR on one patch_size x patch_size patch, in inference mode.
DRFeature encode_dr(const DRModel& model, const ImageTensor& patch);
/// Mean of the DR over the non-overlapping patch_size tiles of an image whose
/// sides are multiples of patch_size. Batched (B, 3, H, W) -> (B, d, l).
torch::Tensor encode_dr_tiles(const DRModel& model, const torch::Tensor& images);
DRFeature encode_dr_image(const DRModel& model, const ImageTensor& image);

/// G_LQ(hq_patch, dr), in inference mode.
ImageTensor reconstruct_lq(const DRModel& model, const ImageTensor& hq_patch, const DRFeature& dr);

/// InfoNCE with the positive in the denominator, from precomputed similarities.
double info_nce_from_logits(double positive, std::span<const double> negatives, double tau);
/// Same loss from unit vectors q, k+ and negatives k-.
double contrastive_loss(std::span<const double> q, std::span<const double> k_pos,
                        const std::vector<std::vector<double>>& k_negs, double tau);
/// Batched InfoNCE: row i of q pairs with row i of k; the other rows of k are negatives.
/// Mean over rows. q, k: (m, D), unit rows.
torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k, double tau);

/// Empirical energy distance between rows of `features` (m, D) and `samples` (n, D).
torch::Tensor distribution_loss(const torch::Tensor& features, const torch::Tensor& samples);
double distribution_loss(const std::vector<std::vector<double>>& features,
                         const std::vector<std::vector<double>>& samples);

/// Patch tensors for a batch of paired patch sets, each (m, 3, P, P).
struct PatchBatch {
  torch::Tensor r1, r2, p1, p2;
  static PatchBatch from(std::span<const PairedPatchSet> sets);
  std::int64_t size() const { return r1.size(0); }
};

struct DRMLossTerms {
  torch::Tensor total, recon, contras, distribution;
};

/// All loss terms for one batch with caller-supplied Gaussian reference samples (m, d*l).
DRMLossTerms drm_losses(DRModel& model, const PatchBatch& batch, const torch::Tensor& gaussian,
                        const DRMLossWeights& weights, bool symmetric_recon);

struct DRMStepResult {
  double total = 0, recon = 0, contras = 0, distribution = 0;
};

class DRMTrainer {
 public:
  DRMTrainer(DRModel& model, const DrmConfig& cfg, int total_steps, std::uint64_t seed);

  /// One optimizer step on L_recon + lambda1 L_contras + lambda2 L_distribution.
  DRMStepResult step(std::span<const PairedPatchSet> batch);
  int steps_taken() const noexcept { return optimizer_.steps_taken(); }
  DRMLossWeights weights() const noexcept { return weights_; }

 private:
  DRModel& model_;
  DrmConfig cfg_;
  DRMLossWeights weights_;
  nn::CosineAdam optimizer_;
  torch::Generator gaussian_rng_;
};

struct DRMTrainResult {
  DRModel model;
  std::vector<nn::LossRow> history;
};

/// Full training run: batches of distinct images, one PairedPatchSet per image per step.
DRMTrainResult train_drm(const PairCorpus& corpus, const DrmConfig& cfg, int patch_size,
                         std::uint64_t seed, const nn::ProgressFn& progress = {});

}  // namespace drbfr::drm
