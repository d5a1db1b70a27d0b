// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "checkpoint.hpp"
#include "image.hpp"
#include "metrics.hpp"

namespace drbfr::nn {

/// (3, H, W) float tensor from an HWC image.
torch::Tensor to_tensor(const ImageTensor& image);
/// (B, 3, H, W) batch; all images must share one shape.
torch::Tensor to_batch(const std::vector<ImageTensor>& images);
/// Accepts (3, H, W) or (1, 3, H, W); clamps into [0, 1].
ImageTensor to_image(const torch::Tensor& chw);

torch::Tensor to_tensor(const DRFeature& f);
DRFeature to_feature(const torch::Tensor& dl);

/// Parameters and buffers as checkpoint tensors, prefixed "<prefix>.".
void export_module(const torch::nn::Module& module, const std::string& prefix, std::vector<NamedTensor>& out);
/// Copies checkpoint tensors into the module; every parameter must be present with a matching shape.
void import_module(torch::nn::Module& module, const std::string& prefix, const Checkpoint& ck);

std::int64_t parameter_count(const torch::nn::Module& module);
void set_requires_grad(torch::nn::Module& module, bool flag);

/// Sinusoidal embedding of integer steps, (B,) -> (B, dim).
torch::Tensor timestep_embedding(const torch::Tensor& t, int dim);

/// Adam whose learning rate follows a cosine decay from `lr` to 0 over `total_steps`.
class CosineAdam {
 public:
  CosineAdam(std::vector<torch::Tensor> params, double lr, int total_steps);
  /// Applies the scheduled rate for the current step, steps, and advances.
  void step();
  void zero_grad() { optimizer_.zero_grad(); }
  int steps_taken() const noexcept { return step_; }
  double current_lr() const;

 private:
  torch::optim::Adam optimizer_;
  double base_lr_;
  int total_steps_;
  int step_ = 0;
};

/// One line per step of a training run.
struct LossRow {
  int step = 0;
  std::vector<std::pair<std::string, double>> values;
};

using ProgressFn = std::function<void(const LossRow&)>;

void write_loss_csv(const std::vector<LossRow>& rows, const std::string& path);

/// Seeds libtorch's global generator and holds it for the lifetime of the
/// guard, so concurrent trainers initialize their weights reproducibly.
class SeededInit {
 public:
  explicit SeededInit(std::uint64_t seed);

 private:
  std::lock_guard<std::mutex> lock_;
};

/// Pins libtorch to deterministic single-threaded execution.
void configure_runtime();

}  // namespace drbfr::nn
