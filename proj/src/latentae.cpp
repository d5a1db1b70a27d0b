// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "errors.hpp"

namespace drbfr::latent {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int in, int out, int k = 3, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

torch::nn::LeakyReLU act() { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.1)); }

// Channel width at each resolution level, finest first.
std::vector<int> level_widths(int base, int levels) {
  std::vector<int> w{std::max(4, base / 2)};
  for (int i = 1; i <= levels; ++i) w.push_back(base << (i - 1));
  return w;
}

struct ResidualImpl : torch::nn::Module {
  explicit ResidualImpl(int ch) {
    c1 = register_module("c1", conv(ch, ch));
    c2 = register_module("c2", conv(ch, ch));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    const auto a = [](const torch::Tensor& t) { return F::leaky_relu(t, F::LeakyReLUFuncOptions().negative_slope(0.1)); };
    return x + c2(a(c1(a(x))));
  }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
};
TORCH_MODULE(Residual);

constexpr std::int64_t kBatch = 32;

}  // namespace

torch::Tensor to_tensor(const LatentTensor& z) {
  if (z.values.size() != static_cast<std::size_t>(z.channels) * z.height * z.width)
    throw ArgumentError("LatentTensor size mismatch");
  return torch::from_blob(const_cast<float*>(z.values.data()), {z.channels, z.height, z.width}, torch::kFloat32)
      .clone();
}

LatentTensor to_latent(const torch::Tensor& chw_in) {
  auto chw = chw_in.dim() == 4 ? chw_in.squeeze(0) : chw_in;
  if (chw.dim() != 3) throw ArgumentError("to_latent: expected (c, h, w)");
  auto t = chw.detach().to(torch::kFloat32).contiguous();
  LatentTensor z{static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), {}};
  z.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return z;
}

AutoencoderImpl::AutoencoderImpl(const AeConfig& c) : cfg(c), quantized(c.mode == "quantized") {
  if (!std::has_single_bit(static_cast<unsigned>(cfg.factor)))
    throw ArgumentError("autoencoder factor must be a power of two");
  const int levels = std::countr_zero(static_cast<unsigned>(cfg.factor));
  const auto w = level_widths(cfg.width, levels);

  torch::nn::Sequential enc;
  enc->push_back(conv(3, w[0]));
  enc->push_back(Residual(w[0]));
  for (int i = 0; i < levels; ++i) {
    enc->push_back(conv(w[i], w[i + 1], 3, 2));
    enc->push_back(Residual(w[i + 1]));
  }
  enc->push_back(Residual(w[levels]));
  enc->push_back(act());
  enc->push_back(conv(w[levels], cfg.channels, 1));
  encoder = register_module("encoder", enc);

  torch::nn::Sequential dec;
  dec->push_back(conv(cfg.channels, w[levels]));
  dec->push_back(Residual(w[levels]));
  dec->push_back(Residual(w[levels]));
  for (int i = levels; i > 0; --i) {
    dec->push_back(torch::nn::Upsample(
        torch::nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    dec->push_back(conv(w[i], w[i - 1]));
    dec->push_back(Residual(w[i - 1]));
  }
  dec->push_back(act());
  dec->push_back(conv(w[0], 3));
  decoder = register_module("decoder", dec);

  if (quantized) {
    const double bound = 1.0 / cfg.codebook_size;
    codebook = register_parameter("codebook",
                                  torch::empty({cfg.codebook_size, cfg.channels}).uniform_(-bound, bound));
  }
}

torch::Tensor AutoencoderImpl::encode_continuous(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % cfg.factor != 0 || x.size(3) % cfg.factor != 0)
    throw ArgumentError("autoencoder input sides must be divisible by " + std::to_string(cfg.factor));
  return encoder->forward(x);
}

QuantizeResult AutoencoderImpl::quantize(const torch::Tensor& z) {
  if (!quantized) throw ArgumentError("autoencoder is not in quantized mode");
  const auto b = z.size(0), c = z.size(1), h = z.size(2), w = z.size(3);
  auto flat = z.permute({0, 2, 3, 1}).reshape({-1, c});
  auto dist = flat.pow(2).sum(1, true) - 2 * torch::matmul(flat, codebook.t()) + codebook.pow(2).sum(1).unsqueeze(0);
  auto idx = dist.argmin(1);
  auto codes = codebook.index_select(0, idx).view({b, h, w, c}).permute({0, 3, 1, 2});
  QuantizeResult r;
  r.indices = idx.view({b, h, w});
  r.codebook_loss = (codes - z.detach()).pow(2).mean();
  r.commitment_loss = (z - codes.detach()).pow(2).mean();
  r.quantized = z.requires_grad() ? z + (codes - z).detach() : codes;
  return r;
}

torch::Tensor AutoencoderImpl::encode(const torch::Tensor& x) {
  auto z = encode_continuous(x);
  return quantized ? quantize(z).quantized : z;
}

torch::Tensor AutoencoderImpl::decode(const torch::Tensor& z) {
  if (z.dim() != 4 || z.size(1) != cfg.channels)
    throw ArgumentError("decode: latent must have " + std::to_string(cfg.channels) + " channels");
  return decoder->forward(z);
}

AutoencoderModel::AutoencoderModel(const AeConfig& cfg) : net(Autoencoder(cfg)) {}

Checkpoint AutoencoderModel::to_checkpoint(const std::string& config_hash, std::int64_t step) const {
  Checkpoint ck;
  ck.kind = "ae";
  ck.config_hash = config_hash;
  ck.step = step;
  const auto& c = net->cfg;
  ck.meta = {{"mode", c.mode},     {"factor", c.factor},           {"channels", c.channels},
             {"width", c.width},   {"codebook_size", c.codebook_size}, {"latent_scale", latent_scale}};
  nn::export_module(*net, "ae", ck.tensors);
  return ck;
}

AutoencoderModel AutoencoderModel::from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "ae") throw FormatError("expected an ae checkpoint, got '" + ck.kind + "'");
  AeConfig cfg;
  try {
    cfg.mode = ck.meta.at("mode").get<std::string>();
    cfg.factor = ck.meta.at("factor").get<int>();
    cfg.channels = ck.meta.at("channels").get<int>();
    cfg.width = ck.meta.at("width").get<int>();
    cfg.codebook_size = ck.meta.at("codebook_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ae checkpoint metadata incomplete: ") + e.what());
  }
  AutoencoderModel model(cfg);
  nn::import_module(*model.net, "ae", ck);
  model.latent_scale = ck.meta.at("latent_scale").get<double>();
  model.net->eval();
  return model;
}

torch::Tensor AutoencoderModel::encode_scaled(const torch::Tensor& images) const {
  torch::NoGradGuard guard;
  auto n = net;
  return n->encode(images) * latent_scale;
}

torch::Tensor AutoencoderModel::decode_scaled(const torch::Tensor& z) const {
  torch::NoGradGuard guard;
  auto n = net;
  return n->decode(z / latent_scale).clamp(0.0, 1.0);
}

LatentTensor encode(const AutoencoderModel& model, const ImageTensor& image) {
  if (image.height() % model.factor() != 0 || image.width() % model.factor() != 0)
    throw ArgumentError("encode: image sides must be divisible by " + std::to_string(model.factor()));
  torch::NoGradGuard guard;
  auto net = model.net;
  return to_latent(net->encode(nn::to_tensor(image).unsqueeze(0)));
}

ImageTensor decode(const AutoencoderModel& model, const LatentTensor& z) {
  if (z.channels != model.channels()) throw ArgumentError("decode: latent channel mismatch");
  torch::NoGradGuard guard;
  auto net = model.net;
  return nn::to_image(net->decode(to_tensor(z).unsqueeze(0)).clamp(0.0, 1.0));
}

double calibrate_latent_scale(const AutoencoderModel& model, const std::vector<ImageTensor>& corpus) {
  torch::NoGradGuard guard;
  auto net = model.net;
  double sum = 0.0, sum_sq = 0.0;
  std::int64_t count = 0;
  for (std::size_t start = 0; start < corpus.size(); start += kBatch) {
    const auto end = std::min(corpus.size(), start + kBatch);
    std::vector<ImageTensor> chunk(corpus.begin() + start, corpus.begin() + end);
    auto z = net->encode(nn::to_batch(chunk)).to(torch::kFloat64);
    sum += z.sum().item<double>();
    sum_sq += z.pow(2).sum().item<double>();
    count += z.numel();
  }
  const double mean = sum / count;
  const double var = sum_sq / count - mean * mean;
  if (!(var > 0.0)) throw ConfigError("latent calibration failed: zero latent variance");
  return 1.0 / std::sqrt(var);
}

AeTrainResult train_autoencoder(const std::vector<ImageTensor>& corpus, const AeConfig& cfg,
                                std::uint64_t seed, const nn::ProgressFn& progress) {
  if (static_cast<int>(corpus.size()) < cfg.min_corpus && !cfg.allow_small_corpus)
    throw ConfigError("autoencoder corpus has " + std::to_string(corpus.size()) + " images (< " +
                      std::to_string(cfg.min_corpus) + "); set latentae.allow_small_corpus to override");
  if (corpus.empty()) throw ConfigError("autoencoder corpus is empty");
  nn::configure_runtime();
  AeTrainResult result = [&] {
    nn::SeededInit init(seed);
    return AeTrainResult{AutoencoderModel(cfg), {}};
  }();
  auto& net = result.model.net;
  net->train();
  nn::CosineAdam optimizer(net->parameters(), cfg.lr, cfg.steps);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto batch_size = std::min<std::size_t>(cfg.batch, corpus.size());
  for (int s = 0; s < cfg.steps; ++s) {
    if (cursor + batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::vector<ImageTensor> batch;
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(corpus[order[cursor++]]);
    auto x = nn::to_batch(batch);
    optimizer.zero_grad();
    auto z = net->encode_continuous(x);
    torch::Tensor recon, codebook_loss, commit_loss;
    if (net->quantized) {
      auto q = net->quantize(z);
      recon = (net->decode(q.quantized) - x).abs().mean();
      codebook_loss = q.codebook_loss;
      commit_loss = q.commitment_loss;
    } else {
      recon = (net->decode(z) - x).abs().mean();
      codebook_loss = torch::zeros({});
      commit_loss = torch::zeros({});
    }
    auto total = recon + codebook_loss + cfg.commitment * commit_loss;
    total.backward();
    optimizer.step();
    nn::LossRow row{s, {{"total", total.item<double>()}, {"l1", recon.item<double>()},
                        {"codebook", codebook_loss.item<double>()}, {"commitment", commit_loss.item<double>()}}};
    if (progress) progress(row);
    result.history.push_back(std::move(row));
  }
  net->eval();
  result.model.latent_scale = calibrate_latent_scale(result.model, corpus);
  return result;
}

}  // namespace drbfr::latent
