// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "config.hpp"
#include "drm.hpp"
#include "latentae.hpp"
#include "nn_common.hpp"

namespace drbfr::ldm {

enum class ScheduleKind { kLinear, kCosine };
ScheduleKind parse_schedule(const std::string& name);

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
};

/// Linear: beta from 1e-4 to 0.02. Cosine: squared-cosine alpha_bar with offset 0.008,
/// betas capped at 0.999.
NoiseSchedule make_schedule(int T, ScheduleKind kind);

/// sqrt(alpha_bar[t]) z0 + sqrt(1 - alpha_bar[t]) eps, one shared step.
torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule);
/// Per-sample steps t: (B,) int64.
torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule);

/// Attention from spatial activations (queries) to the DR tokens (keys/values).
/// Key, value, and output projections carry no bias, so all-zero tokens add nothing.
struct CrossAttentionImpl : torch::nn::Module {
  CrossAttentionImpl(int channels, int token_dim);
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& tokens);
  /// Softmax weights (B, HW, d).
  torch::Tensor attention_weights(const torch::Tensor& h, const torch::Tensor& tokens);

  int channels;
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};
};
TORCH_MODULE(CrossAttention);

struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int in, int out, int emb_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear emb_proj{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

struct DenoiserOptions {
  int latent_channels = 4;
  int width = 32;
  int d = 4;
  int l = 64;
  bool all_levels = true;  // false: a single DR attention right after the input convolution
};

/// Noise predictor over channel-concat(z_t, f_lq) with DR cross-attention. The
/// adapt head maps t to per-channel (alpha_t, beta_t) applied to the DR tokens.
struct DenoiserImpl : torch::nn::Module {
  explicit DenoiserImpl(const DenoiserOptions& opts);

  /// z_t, f_lq: (B, c, h, w); f_dr: (B, d, l) or undefined to drop the DR path; t: (B,) int64.
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& f_lq, const torch::Tensor& f_dr,
                        const torch::Tensor& t);
  /// (alpha_t, beta_t), each (B, l).
  std::pair<torch::Tensor, torch::Tensor> adapt(const torch::Tensor& t);
  /// Zeroes the last adapt layer so alpha_t = beta_t = 0.
  void zero_adapt_head();

  DenoiserOptions opts;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Sequential adapt_mlp{nullptr};
  torch::nn::Conv2d in_conv{nullptr}, down1{nullptr}, down2{nullptr}, up2{nullptr}, up1{nullptr};
  ResBlock enc0{nullptr}, enc1{nullptr}, mid_a{nullptr}, mid_b{nullptr}, dec1{nullptr}, dec0{nullptr};
  CrossAttention attn_in{nullptr}, attn1{nullptr}, attn_mid{nullptr}, attn_dec1{nullptr}, attn_dec0{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(Denoiser);

/// Denoiser plus the settings it was trained under.
class DiffusionModel {
 public:
  DiffusionModel(const LdmConfig& cfg, int latent_channels, int d, int l);

  Denoiser net{nullptr};
  NoiseSchedule schedule;
  LdmConfig cfg;
  bool use_dr;

  Checkpoint to_checkpoint(const std::string& config_hash, std::int64_t step, const nlohmann::json& parents) const;
  static DiffusionModel from_checkpoint(const Checkpoint& ck);
};

/// Frozen conditioning models plus the denoiser.
struct RestorationModels {
  const latent::AutoencoderModel* ae = nullptr;
  const drm::DRModel* drm = nullptr;  // may be null when the denoiser ignores the DR
  DiffusionModel* diffusion = nullptr;
};

/// Scaled latents and DR conditions for a batch of images (no gradients).
struct Conditions {
  torch::Tensor f_lq;  // (B, c, h, w)
  torch::Tensor f_dr;  // (B, d, l), undefined when the DR path is off
};
Conditions make_conditions(const RestorationModels& models, const torch::Tensor& lq);

/// eps-prediction MSE for one batch of encoded samples with the given steps and noise.
torch::Tensor ldm_loss(DiffusionModel& model, const torch::Tensor& z0, const Conditions& cond,
                       const torch::Tensor& t, const torch::Tensor& eps);

class LdmTrainer {
 public:
  LdmTrainer(DiffusionModel& model, int total_steps, std::uint64_t seed);

  /// Encodes the pairs with the frozen models and takes one optimizer step.
  double step(const RestorationModels& models, const std::vector<ImageTensor>& hq,
              const std::vector<ImageTensor>& lq);
  /// One optimizer step from precomputed z0 = s * E(hq) and conditions.
  double step_encoded(const torch::Tensor& z0, const Conditions& cond);

 private:
  DiffusionModel& model_;
  nn::CosineAdam optimizer_;
  torch::Generator rng_;
};

struct ReverseStep {
  torch::Tensor z_prev;
  torch::Tensor z0_hat;
};

/// Generalized DDIM update from step t to t_prev (t_prev = -1 ends the chain).
/// eta = 0 is deterministic DDIM; eta = 1 over consecutive steps is ancestral DDPM.
ReverseStep reverse_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& eps_pred,
                         const NoiseSchedule& schedule, double eta, const torch::Tensor& noise);

/// Evenly strided step indices in ascending order.
std::vector<int> sampling_steps(int T, int steps);

enum class Sampler { kDdpm, kDdim };
Sampler parse_sampler(const std::string& name);

/// Reverse trajectory from N(0, I) latents, decoded to images in [0, 1].
/// Image i draws all of its noise from its own generator seeded with seeds[i].
torch::Tensor restore_batch(const RestorationModels& models, const torch::Tensor& lq, Sampler sampler, int steps,
                            std::span<const std::uint64_t> seeds);
ImageTensor restore(const RestorationModels& models, const ImageTensor& lq, Sampler sampler, int steps,
                    std::uint64_t seed);

struct LdmTrainResult {
  DiffusionModel model;
  std::vector<nn::LossRow> history;
};

/// Caches the frozen encodings of the corpus once, then trains the denoiser.
/// `dr_shape` (d, l) sizes the unused DR path when no DRM is given.
LdmTrainResult train_ldm(const PairCorpus& corpus, const latent::AutoencoderModel& ae, const drm::DRModel* drm,
                         const LdmConfig& cfg, std::uint64_t seed, const nn::ProgressFn& progress = {},
                         std::array<int, 2> dr_shape = {4, 64});

}  // namespace drbfr::ldm
