// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "drm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "errors.hpp"

namespace drbfr::drm {

namespace F = torch::nn::functional;

namespace {

constexpr double kSlope = 0.1;

torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kSlope)); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

// Pairwise Euclidean distances (m, n) with a zero subgradient at coincident points.
torch::Tensor pairwise_distances(const torch::Tensor& a, const torch::Tensor& b) {
  auto sq = (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(-1);
  return torch::where(sq > 0, sq.clamp_min(1e-30).sqrt(), torch::zeros_like(sq));
}

}  // namespace

DREncoderImpl::DREncoderImpl(int channels, int d_, int l_) : d(d_), l(l_) {
  const int c = channels;
  const auto act = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)); };
  features = register_module(
      "features", torch::nn::Sequential(conv3(3, c), act(), conv3(c, c), act(), torch::nn::MaxPool2d(2),
                                        conv3(c, 2 * c), act(), conv3(2 * c, 2 * c), act(), torch::nn::MaxPool2d(2),
                                        conv3(2 * c, 4 * c), act(), conv3(4 * c, 4 * c), act()));
  head = register_module("head", torch::nn::Sequential(torch::nn::Linear(4 * c, 4 * c), act(),
                                                       torch::nn::Linear(4 * c, d * l)));
}

torch::Tensor DREncoderImpl::forward(const torch::Tensor& x) {
  auto pooled = features->forward(x).mean({2, 3});
  return head->forward(pooled).view({x.size(0), d, l});
}

ProjectionHeadImpl::ProjectionHeadImpl(int in_features, int proj_dim) {
  const int hidden = std::max(in_features, proj_dim);
  fc1 = register_module("fc1", torch::nn::Linear(in_features, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, proj_dim));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& features) {
  auto h = fc2(lrelu(fc1(features.flatten(1))));
  return F::normalize(h, F::NormalizeFuncOptions().dim(1).eps(1e-12));
}

AdaINImpl::AdaINImpl(int channels_, int dr_features) : channels(channels_) {
  affine = register_module("affine", torch::nn::Linear(dr_features, 2 * channels));
}

std::pair<torch::Tensor, torch::Tensor> AdaINImpl::modulation(const torch::Tensor& dr_flat) {
  auto st = affine(dr_flat);
  return {1.0 + st.narrow(1, 0, channels), st.narrow(1, channels, channels)};
}

torch::Tensor AdaINImpl::forward(const torch::Tensor& x, const torch::Tensor& dr_flat) {
  auto mean = x.mean({2, 3}, true);
  auto var = x.var({2, 3}, /*unbiased=*/false, /*keepdim=*/true);
  auto normalized = (x - mean) / torch::sqrt(var + eps);
  auto [scale, shift] = modulation(dr_flat);
  return normalized * scale.unsqueeze(-1).unsqueeze(-1) + shift.unsqueeze(-1).unsqueeze(-1);
}

LQGeneratorImpl::LQGeneratorImpl(int channels, int d, int l) {
  const int c = channels;
  const int f = d * l;
  e1a = register_module("e1a", conv3(3, c));
  e1b = register_module("e1b", conv3(c, c));
  e2a = register_module("e2a", conv3(c, 2 * c, 2));
  e2b = register_module("e2b", conv3(2 * c, 2 * c));
  e3a = register_module("e3a", conv3(2 * c, 4 * c, 2));
  e3b = register_module("e3b", conv3(4 * c, 4 * c));
  d2a = register_module("d2a", conv3(4 * c, 2 * c));
  d2b = register_module("d2b", conv3(4 * c, 2 * c));
  d1a = register_module("d1a", conv3(2 * c, c));
  d1b = register_module("d1b", conv3(2 * c, c));
  out = register_module("out", conv3(c, 3));
  n2a = register_module("n2a", AdaIN(2 * c, f));
  n2b = register_module("n2b", AdaIN(2 * c, f));
  n1a = register_module("n1a", AdaIN(c, f));
  n1b = register_module("n1b", AdaIN(c, f));
}

torch::Tensor LQGeneratorImpl::forward(const torch::Tensor& hq, const torch::Tensor& dr) {
  auto f = dr.flatten(1);
  auto x1 = lrelu(e1b(lrelu(e1a(hq))));
  auto x2 = lrelu(e2b(lrelu(e2a(x1))));
  auto x3 = lrelu(e3b(lrelu(e3a(x2))));
  auto u2 = lrelu(n2a(d2a(upsample2(x3)), f));
  u2 = lrelu(n2b(d2b(torch::cat({u2, x2}, 1)), f));
  auto u1 = lrelu(n1a(d1a(upsample2(u2)), f));
  u1 = lrelu(n1b(d1b(torch::cat({u1, x1}, 1)), f));
  return torch::clamp(hq + out(u1), 0.0, 1.0);
}

DRModel::DRModel(const DrmConfig& cfg, int patch_size) : cfg_(cfg), patch_size_(patch_size) {
  if (patch_size % 4 != 0) throw ArgumentError("DR patch size must be divisible by 4");
  encoder = DREncoder(cfg.channels, cfg.d, cfg.l);
  projector = ProjectionHead(cfg.d * cfg.l, cfg.proj_dim);
  generator = LQGenerator(cfg.channels, cfg.d, cfg.l);
}

std::vector<torch::Tensor> DRModel::parameters() const {
  std::vector<torch::Tensor> params;
  for (const torch::nn::Module* m : {static_cast<const torch::nn::Module*>(encoder.get()),
                                      static_cast<const torch::nn::Module*>(projector.get()),
                                      static_cast<const torch::nn::Module*>(generator.get())})
    for (const auto& p : m->parameters(true)) params.push_back(p);
  return params;
}

void DRModel::to(torch::Dtype dtype) {
  encoder->to(dtype);
  projector->to(dtype);
  generator->to(dtype);
}

void DRModel::train(bool on) {
  encoder->train(on);
  projector->train(on);
  generator->train(on);
}

Checkpoint DRModel::to_checkpoint(const std::string& config_hash, std::int64_t step) const {
  Checkpoint ck;
  ck.kind = "drm";
  ck.config_hash = config_hash;
  ck.step = step;
  ck.meta = {{"d", cfg_.d},
             {"l", cfg_.l},
             {"channels", cfg_.channels},
             {"proj_dim", cfg_.proj_dim},
             {"patch_size", patch_size_},
             {"tau", cfg_.tau},
             {"lambda1", cfg_.lambda1},
             {"lambda2", cfg_.lambda2},
             {"recon_weight", cfg_.recon_weight}};
  nn::export_module(*encoder, "encoder", ck.tensors);
  nn::export_module(*projector, "projector", ck.tensors);
  nn::export_module(*generator, "generator", ck.tensors);
  return ck;
}

DRModel DRModel::from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "drm") throw FormatError("expected a drm checkpoint, got '" + ck.kind + "'");
  DrmConfig cfg;
  try {
    cfg.d = ck.meta.at("d").get<int>();
    cfg.l = ck.meta.at("l").get<int>();
    cfg.channels = ck.meta.at("channels").get<int>();
    cfg.proj_dim = ck.meta.at("proj_dim").get<int>();
    cfg.tau = ck.meta.at("tau").get<double>();
    cfg.lambda1 = ck.meta.at("lambda1").get<double>();
    cfg.lambda2 = ck.meta.at("lambda2").get<double>();
    cfg.recon_weight = ck.meta.at("recon_weight").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("drm checkpoint metadata incomplete: ") + e.what());
  }
  DRModel model(cfg, ck.meta.at("patch_size").get<int>());
  nn::import_module(*model.encoder, "encoder", ck);
  nn::import_module(*model.projector, "projector", ck);
  nn::import_module(*model.generator, "generator", ck);
  model.train(false);
  return model;
}

DRFeature encode_dr(const DRModel& model, const ImageTensor& patch) {
  if (patch.height() != model.patch_size() || patch.width() != model.patch_size())
    throw ArgumentError("encode_dr: expected a " + std::to_string(model.patch_size()) + "x" +
                        std::to_string(model.patch_size()) + " patch");
  torch::NoGradGuard guard;
  auto& enc = const_cast<DREncoderImpl&>(*model.encoder);
  auto f = enc.forward(nn::to_tensor(patch).unsqueeze(0));
  return nn::to_feature(f[0]);
}

torch::Tensor encode_dr_tiles(const DRModel& model, const torch::Tensor& images) {
  const int p = model.patch_size();
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) % p != 0 || images.size(3) % p != 0)
    throw ArgumentError("encode_dr_tiles: image sides must be multiples of the patch size " + std::to_string(p));
  const auto b = images.size(0);
  auto tiles = images.unfold(2, p, p).unfold(3, p, p);  // (B, 3, nh, nw, p, p)
  const auto n = tiles.size(2) * tiles.size(3);
  tiles = tiles.permute({0, 2, 3, 1, 4, 5}).reshape({b * n, 3, p, p});
  auto& enc = const_cast<DREncoderImpl&>(*model.encoder);
  auto f = enc.forward(tiles);
  return f.view({b, n, f.size(1), f.size(2)}).mean(1);
}

DRFeature encode_dr_image(const DRModel& model, const ImageTensor& image) {
  torch::NoGradGuard guard;
  return nn::to_feature(encode_dr_tiles(model, nn::to_tensor(image).unsqueeze(0))[0]);
}

ImageTensor reconstruct_lq(const DRModel& model, const ImageTensor& hq_patch, const DRFeature& dr) {
  if (hq_patch.height() != model.patch_size() || hq_patch.width() != model.patch_size())
    throw ArgumentError("reconstruct_lq: expected a " + std::to_string(model.patch_size()) + " pixel patch");
  if (dr.d != model.config().d || dr.l != model.config().l)
    throw ArgumentError("reconstruct_lq: DR shape mismatch");
  torch::NoGradGuard guard;
  auto& gen = const_cast<LQGeneratorImpl&>(*model.generator);
  return nn::to_image(gen.forward(nn::to_tensor(hq_patch).unsqueeze(0), nn::to_tensor(dr).unsqueeze(0)));
}

double info_nce_from_logits(double positive, std::span<const double> negatives, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("contrastive_loss: tau must be > 0");
  if (negatives.empty()) throw ArgumentError("contrastive_loss: need at least one negative");
  double top = positive / tau;
  for (double n : negatives) top = std::max(top, n / tau);
  double sum = std::exp(positive / tau - top);
  for (double n : negatives) sum += std::exp(n / tau - top);
  return std::max(0.0, top + std::log(sum) - positive / tau);
}

double contrastive_loss(std::span<const double> q, std::span<const double> k_pos,
                        const std::vector<std::vector<double>>& k_negs, double tau) {
  const auto dot = [&q](std::span<const double> v) {
    if (v.size() != q.size()) throw ArgumentError("contrastive_loss: dimension mismatch");
    return std::inner_product(q.begin(), q.end(), v.begin(), 0.0);
  };
  const auto unit = [](std::span<const double> v) {
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (std::fabs(n - 1.0) > 1e-6) throw ArgumentError("contrastive_loss: vectors must be unit-norm");
  };
  unit(q);
  unit(k_pos);
  std::vector<double> negatives;
  for (const auto& k : k_negs) {
    unit(k);
    negatives.push_back(dot(k));
  }
  return info_nce_from_logits(dot(k_pos), negatives, tau);
}

torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("contrastive_loss: tau must be > 0");
  if (q.dim() != 2 || !q.sizes().equals(k.sizes()) || q.size(0) < 2)
    throw ArgumentError("contrastive_loss: q and k must be matching (m >= 2, D) matrices");
  auto logits = torch::matmul(q, k.transpose(0, 1)) / tau;
  return -torch::log_softmax(logits, 1).diagonal().mean();
}

torch::Tensor distribution_loss(const torch::Tensor& features, const torch::Tensor& samples) {
  if (features.dim() != 2 || samples.dim() != 2 || features.size(1) != samples.size(1))
    throw ArgumentError("distribution_loss: dimension mismatch");
  if (features.size(0) < 2 || samples.size(0) < 2) throw ArgumentError("distribution_loss: need >= 2 samples per set");
  return 2.0 * pairwise_distances(features, samples).mean() - pairwise_distances(features, features).mean() -
         pairwise_distances(samples, samples).mean();
}

double distribution_loss(const std::vector<std::vector<double>>& features,
                         const std::vector<std::vector<double>>& samples) {
  if (features.empty() || samples.empty()) throw ArgumentError("distribution_loss: empty set");
  const auto dim = static_cast<std::int64_t>(features.front().size());
  const auto pack = [dim](const std::vector<std::vector<double>>& rows) {
    auto t = torch::empty({static_cast<std::int64_t>(rows.size()), dim}, torch::kFloat64);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<std::int64_t>(rows[i].size()) != dim) throw ArgumentError("distribution_loss: dimension mismatch");
      std::copy(rows[i].begin(), rows[i].end(), t[static_cast<std::int64_t>(i)].data_ptr<double>());
    }
    return t;
  };
  return distribution_loss(pack(features), pack(samples)).item<double>();
}

PatchBatch PatchBatch::from(std::span<const PairedPatchSet> sets) {
  std::vector<ImageTensor> r1, r2, p1, p2;
  for (const auto& s : sets) {
    r1.push_back(s.hq_patches[0]);
    r2.push_back(s.hq_patches[1]);
    p1.push_back(s.lq_patches[0]);
    p2.push_back(s.lq_patches[1]);
  }
  return {nn::to_batch(r1), nn::to_batch(r2), nn::to_batch(p1), nn::to_batch(p2)};
}

DRMLossTerms drm_losses(DRModel& model, const PatchBatch& batch, const torch::Tensor& gaussian,
                        const DRMLossWeights& w, bool symmetric_recon) {
  if (batch.size() < 2) throw ConfigError("DRM training needs a batch of at least 2 images");
  auto f1 = model.encoder->forward(batch.p1);
  auto f2 = model.encoder->forward(batch.p2);

  const auto recon_term = [&] {
    auto r = l1(model.generator->forward(batch.r2, f1), batch.p2);
    if (symmetric_recon) r = 0.5 * (r + l1(model.generator->forward(batch.r1, f2), batch.p1));
    return r;
  };
  DRMLossTerms terms;
  if (w.recon > 0.0) {
    terms.recon = recon_term();
  } else {
    torch::NoGradGuard guard;
    terms.recon = recon_term();
  }
  terms.contras = contrastive_loss(model.projector->forward(f2), model.projector->forward(f1), w.tau);
  terms.distribution = distribution_loss(f1.flatten(1), gaussian);
  terms.total = w.lambda1 * terms.contras + w.lambda2 * terms.distribution;
  terms.total = w.recon > 0.0 ? w.recon * terms.recon + terms.total : terms.total;
  return terms;
}

DRMTrainer::DRMTrainer(DRModel& model, const DrmConfig& cfg, int total_steps, std::uint64_t seed)
    : model_(model),
      cfg_(cfg),
      weights_{cfg.lambda1, cfg.lambda2, cfg.tau, cfg.recon_weight},
      optimizer_(model.parameters(), cfg.lr, total_steps),
      gaussian_rng_(at::make_generator<at::CPUGeneratorImpl>(seed)) {
  if (cfg.batch < 2) throw ConfigError("drm.batch must be >= 2 (negatives come from other images)");
}

DRMStepResult DRMTrainer::step(std::span<const PairedPatchSet> batch) {
  if (batch.size() < 2) throw ConfigError("DRM training step needs at least 2 images");
  model_.train(true);
  const auto pb = PatchBatch::from(batch);
  auto gaussian = torch::randn({pb.size(), static_cast<std::int64_t>(cfg_.d) * cfg_.l}, gaussian_rng_);
  optimizer_.zero_grad();
  auto terms = drm_losses(model_, pb, gaussian, weights_, cfg_.symmetric_recon);
  terms.total.backward();
  optimizer_.step();
  return {terms.total.item<double>(), terms.recon.item<double>(), terms.contras.item<double>(),
          terms.distribution.item<double>()};
}

DRMTrainResult train_drm(const PairCorpus& corpus, const DrmConfig& cfg, int patch_size,
                         std::uint64_t seed, const nn::ProgressFn& progress) {
  if (static_cast<int>(corpus.size()) < cfg.batch)
    throw ConfigError("DRM corpus has " + std::to_string(corpus.size()) + " images, fewer than drm.batch=" +
                      std::to_string(cfg.batch));
  nn::configure_runtime();
  DRMTrainResult result = [&] {
    nn::SeededInit init(seed);
    return DRMTrainResult{DRModel(cfg, patch_size), {}};
  }();
  DRMTrainer trainer(result.model, cfg, cfg.steps, seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 rng(seed);
  // Groups are shuffled as units; with hard negatives a group holds every image of one content.
  std::vector<std::vector<std::size_t>> groups;
  if (cfg.hard_negatives && corpus.content_ids.size() == corpus.size()) {
    std::map<int, std::vector<std::size_t>> by_content;
    for (std::size_t i = 0; i < corpus.size(); ++i) by_content[corpus.content_ids[i]].push_back(i);
    for (auto& [id, members] : by_content) groups.push_back(std::move(members));
  } else {
    for (std::size_t i = 0; i < corpus.size(); ++i) groups.push_back({i});
  }
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  const auto refill = [&] {
    std::shuffle(groups.begin(), groups.end(), rng);
    order.clear();
    for (const auto& g : groups) order.insert(order.end(), g.begin(), g.end());
    cursor = 0;
  };
  refill();
  std::vector<PairedPatchSet> batch;
  for (int s = 0; s < cfg.steps; ++s) {
    batch.clear();
    if (cursor + cfg.batch > order.size()) refill();
    for (int i = 0; i < cfg.batch; ++i) {
      const auto idx = order[cursor++];
      batch.push_back(random_patch_pair(corpus.hq[idx], corpus.lq[idx], patch_size, rng));
    }
    const auto r = trainer.step(batch);
    nn::LossRow row{s, {{"total", r.total}, {"recon", r.recon}, {"contras", r.contras},
                        {"distribution", r.distribution}}};
    if (progress) progress(row);
    result.history.push_back(std::move(row));
  }
  result.model.train(false);
  return result;
}

}  // namespace drbfr::drm
