// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "config.hpp"
#include "nn_common.hpp"

namespace drbfr::latent {

/// Channel-major (c, h, w) latent of one image.
struct LatentTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;
  bool operator==(const LatentTensor&) const = default;
};

torch::Tensor to_tensor(const LatentTensor& z);  // (c, h, w)
LatentTensor to_latent(const torch::Tensor& chw);

struct QuantizeResult {
  torch::Tensor quantized;  // straight-through: forward value is the code, gradient flows to the input
  torch::Tensor indices;    // (B, h, w)
  torch::Tensor codebook_loss;
  torch::Tensor commitment_loss;
};

/// Convolutional encoder/decoder with log2(factor) stride-2 stages. In quantized
/// mode every latent vector is snapped to its nearest codebook row.
struct AutoencoderImpl : torch::nn::Module {
  explicit AutoencoderImpl(const AeConfig& cfg);

  torch::Tensor encode_continuous(const torch::Tensor& x);  // (B,3,H,W) -> (B,c,H/f,W/f)
  QuantizeResult quantize(const torch::Tensor& z);
  /// Encoder output after quantization when enabled.
  torch::Tensor encode(const torch::Tensor& x);
  /// Unclamped reconstruction.
  torch::Tensor decode(const torch::Tensor& z);

  AeConfig cfg;
  bool quantized;
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential decoder{nullptr};
  torch::Tensor codebook;  // (K, c), registered only in quantized mode
};
TORCH_MODULE(Autoencoder);

class AutoencoderModel {
 public:
  explicit AutoencoderModel(const AeConfig& cfg);

  Autoencoder net{nullptr};
  /// Global multiplier giving the corpus latents unit variance.
  double latent_scale = 1.0;

  int factor() const noexcept { return net->cfg.factor; }
  int channels() const noexcept { return net->cfg.channels; }
  bool quantized() const noexcept { return net->quantized; }

  Checkpoint to_checkpoint(const std::string& config_hash, std::int64_t step) const;
  static AutoencoderModel from_checkpoint(const Checkpoint& ck);

  /// latent_scale * encode(x) for a batch, without gradients.
  torch::Tensor encode_scaled(const torch::Tensor& images) const;
  /// decode(z / latent_scale) clamped to [0, 1], without gradients.
  torch::Tensor decode_scaled(const torch::Tensor& z) const;
};

/// Unscaled latent of one image; sides must be divisible by the factor.
LatentTensor encode(const AutoencoderModel& model, const ImageTensor& image);
/// Image in [0, 1] from an unscaled latent of the configured channel count.
ImageTensor decode(const AutoencoderModel& model, const LatentTensor& z);

struct AeTrainResult {
  AutoencoderModel model;
  std::vector<nn::LossRow> history;
};

/// L1 reconstruction (+ codebook and commitment terms when quantized), then
/// calibration of latent_scale over the corpus.
AeTrainResult train_autoencoder(const std::vector<ImageTensor>& corpus, const AeConfig& cfg,
                                std::uint64_t seed, const nn::ProgressFn& progress = {});

/// 1 / std of all latent values of the corpus.
double calibrate_latent_scale(const AutoencoderModel& model, const std::vector<ImageTensor>& corpus);

}  // namespace drbfr::latent
