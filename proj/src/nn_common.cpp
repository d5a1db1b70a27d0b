// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "nn_common.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "errors.hpp"

namespace drbfr::nn {

torch::Tensor to_tensor(const ImageTensor& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data().data()),
                              {image.height(), image.width(), 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor to_batch(const std::vector<ImageTensor>& images) {
  if (images.empty()) throw ArgumentError("to_batch: empty image list");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) {
    require_same_shape(images.front(), img, "to_batch");
    parts.push_back(to_tensor(img));
  }
  return torch::stack(parts);
}

ImageTensor to_image(const torch::Tensor& chw_in) {
  torch::Tensor chw = chw_in.dim() == 4 ? chw_in.squeeze(0) : chw_in;
  if (chw.dim() != 3 || chw.size(0) != 3) throw ArgumentError("to_image: expected (3, H, W)");
  auto hwc = chw.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  const auto h = static_cast<int>(hwc.size(0));
  const auto w = static_cast<int>(hwc.size(1));
  std::vector<float> pixels(hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel());
  return ImageTensor(h, w, std::move(pixels));
}

torch::Tensor to_tensor(const DRFeature& f) {
  if (f.values.size() != static_cast<std::size_t>(f.d) * f.l) throw ArgumentError("DRFeature size mismatch");
  return torch::from_blob(const_cast<float*>(f.values.data()), {f.d, f.l}, torch::kFloat32).clone();
}

DRFeature to_feature(const torch::Tensor& dl) {
  if (dl.dim() != 2) throw ArgumentError("to_feature: expected (d, l)");
  auto t = dl.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  DRFeature f;
  f.d = static_cast<int>(t.size(0));
  f.l = static_cast<int>(t.size(1));
  f.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return f;
}

void export_module(const torch::nn::Module& module, const std::string& prefix, std::vector<NamedTensor>& out) {
  const auto add = [&](const std::string& name, const torch::Tensor& value) {
    auto t = value.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    NamedTensor nt;
    nt.name = prefix + "." + name;
    nt.shape.assign(t.sizes().begin(), t.sizes().end());
    nt.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    out.push_back(std::move(nt));
  };
  for (const auto& p : module.named_parameters(true)) add(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) add(b.key(), b.value());
}

void import_module(torch::nn::Module& module, const std::string& prefix, const Checkpoint& ck) {
  torch::NoGradGuard guard;
  const auto load = [&](const std::string& name, torch::Tensor& target) {
    const NamedTensor& nt = ck.tensor(prefix + "." + name);
    std::vector<std::int64_t> shape(target.sizes().begin(), target.sizes().end());
    if (nt.shape != shape) throw FormatError("checkpoint shape mismatch for '" + prefix + "." + name + "'");
    auto src = torch::from_blob(const_cast<float*>(nt.values.data()), target.sizes(), torch::kFloat32);
    target.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) load(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) load(b.key(), b.value());
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters(true)) n += p.numel();
  return n;
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters(true)) p.set_requires_grad(flag);
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / static_cast<double>(half));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::cos(args), torch::sin(args)}, 1);
  if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({emb.size(0), 1}, opts)}, 1);
  return emb;
}

CosineAdam::CosineAdam(std::vector<torch::Tensor> params, double lr, int total_steps)
    : optimizer_(std::move(params), torch::optim::AdamOptions(lr)), base_lr_(lr), total_steps_(total_steps) {}

double CosineAdam::current_lr() const {
  if (total_steps_ <= 1) return base_lr_;
  const double progress = std::min(1.0, static_cast<double>(step_) / total_steps_);
  return 0.5 * base_lr_ * (1.0 + std::cos(std::numbers::pi * progress));
}

void CosineAdam::step() {
  const double lr = current_lr();
  for (auto& group : optimizer_.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  optimizer_.step();
  ++step_;
}

void write_loss_csv(const std::vector<LossRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "step";
  if (!rows.empty())
    for (const auto& [name, _] : rows.front().values) out << "," << name;
  out << "\n" << std::setprecision(9);
  for (const auto& row : rows) {
    out << row.step;
    for (const auto& [_, v] : row.values) out << "," << v;
    out << "\n";
  }
}

namespace {
std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

SeededInit::SeededInit(std::uint64_t seed) : lock_(init_mutex()) { torch::manual_seed(seed); }

void configure_runtime() {
  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
}

}  // namespace drbfr::nn
