// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldrm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "errors.hpp"

namespace drbfr::ldm {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::GroupNorm group_norm(int channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(8, channels), channels));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

torch::Tensor gather_schedule(const std::vector<double>& table, const torch::Tensor& t, const torch::Tensor& like) {
  auto values = torch::tensor(table, torch::kFloat64).index_select(0, t.to(torch::kLong));
  return values.to(like.scalar_type()).view({-1, 1, 1, 1});
}

constexpr std::int64_t kEncodeChunk = 32;

}  // namespace

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ArgumentError("unknown schedule '" + name + "'");
}

Sampler parse_sampler(const std::string& name) {
  if (name == "ddim") return Sampler::kDdim;
  if (name == "ddpm") return Sampler::kDdpm;
  throw ArgumentError("unknown sampler '" + name + "'");
}

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
  if (T < 2) throw ArgumentError("make_schedule: T must be >= 2");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  if (kind == ScheduleKind::kLinear) {
    for (int t = 0; t < T; ++t) s.beta[t] = 1e-4 + (0.02 - 1e-4) * t / (T - 1);
  } else {
    constexpr double offset = 0.008;
    const auto f = [T](double t) {
      const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t < T; ++t) s.beta[t] = std::min(0.999, 1.0 - f(t + 1) / f(t));
  }
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    prod *= 1.0 - s.beta[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule) {
  if (t < 0 || t >= schedule.T) throw ArgumentError("q_sample: step out of range");
  if (!z0.sizes().equals(eps.sizes())) throw ArgumentError("q_sample: eps shape differs from z0");
  const double ab = schedule.alpha_bar[t];
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
  if (!z0.sizes().equals(eps.sizes())) throw ArgumentError("q_sample: eps shape differs from z0");
  if (t.numel() != z0.size(0)) throw ArgumentError("q_sample: one step per sample required");
  if (t.min().item<std::int64_t>() < 0 || t.max().item<std::int64_t>() >= schedule.T)
    throw ArgumentError("q_sample: step out of range");
  auto ab = gather_schedule(schedule.alpha_bar, t, z0);
  return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
}

CrossAttentionImpl::CrossAttentionImpl(int channels_, int token_dim) : channels(channels_) {
  norm = register_module("norm", group_norm(channels));
  to_q = register_module("to_q", torch::nn::Linear(channels, channels));
  to_k = register_module("to_k", torch::nn::Linear(torch::nn::LinearOptions(token_dim, channels).bias(false)));
  to_v = register_module("to_v", torch::nn::Linear(torch::nn::LinearOptions(token_dim, channels).bias(false)));
  to_out = register_module("to_out", torch::nn::Linear(torch::nn::LinearOptions(channels, channels).bias(false)));
}

torch::Tensor CrossAttentionImpl::attention_weights(const torch::Tensor& h, const torch::Tensor& tokens) {
  auto q = to_q(norm(h).flatten(2).transpose(1, 2));  // (B, HW, C)
  auto k = to_k(tokens);                              // (B, d, C)
  return torch::softmax(torch::bmm(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(channels)), -1);
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& h, const torch::Tensor& tokens) {
  auto attn = attention_weights(h, tokens);
  auto out = to_out(torch::bmm(attn, to_v(tokens)));  // (B, HW, C)
  return h + out.transpose(1, 2).reshape(h.sizes());
}

ResBlockImpl::ResBlockImpl(int in, int out, int emb_dim) {
  norm1 = register_module("norm1", group_norm(in));
  conv1 = register_module("conv1", conv3(in, out));
  emb_proj = register_module("emb_proj", torch::nn::Linear(emb_dim, out));
  norm2 = register_module("norm2", group_norm(out));
  conv2 = register_module("conv2", conv3(out, out));
  if (in != out) skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  auto h = conv1(torch::silu(norm1(x)));
  h = h + emb_proj(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2(torch::silu(norm2(h)));
  return (skip ? skip(x) : x) + h;
}

DenoiserImpl::DenoiserImpl(const DenoiserOptions& o) : opts(o) {
  const int w = opts.width;
  const int c = opts.latent_channels;
  const int emb = 2 * w;
  time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(w, emb), torch::nn::SiLU(),
                                                               torch::nn::Linear(emb, emb)));
  adapt_mlp = register_module("adapt_mlp", torch::nn::Sequential(torch::nn::Linear(w, w), torch::nn::SiLU(),
                                                                 torch::nn::Linear(w, 2 * opts.l)));
  {
    // alpha_t = 1, beta_t = 0 at initialization.
    torch::NoGradGuard guard;
    auto last = adapt_mlp[2]->as<torch::nn::Linear>();
    last->weight.zero_();
    last->bias.zero_();
    last->bias.narrow(0, 0, opts.l).fill_(1.0);
  }
  in_conv = register_module("in_conv", conv3(2 * c, w));
  enc0 = register_module("enc0", ResBlock(w, w, emb));
  down1 = register_module("down1", conv3(w, 2 * w, 2));
  enc1 = register_module("enc1", ResBlock(2 * w, 2 * w, emb));
  down2 = register_module("down2", conv3(2 * w, 2 * w, 2));
  mid_a = register_module("mid_a", ResBlock(2 * w, 2 * w, emb));
  mid_b = register_module("mid_b", ResBlock(2 * w, 2 * w, emb));
  up2 = register_module("up2", conv3(2 * w, 2 * w));
  dec1 = register_module("dec1", ResBlock(4 * w, 2 * w, emb));
  up1 = register_module("up1", conv3(2 * w, w));
  dec0 = register_module("dec0", ResBlock(2 * w, w, emb));
  attn_in = register_module("attn_in", CrossAttention(w, opts.l));
  attn1 = register_module("attn1", CrossAttention(2 * w, opts.l));
  attn_mid = register_module("attn_mid", CrossAttention(2 * w, opts.l));
  attn_dec1 = register_module("attn_dec1", CrossAttention(2 * w, opts.l));
  attn_dec0 = register_module("attn_dec0", CrossAttention(w, opts.l));
  out_norm = register_module("out_norm", group_norm(w));
  out_conv = register_module("out_conv", conv3(w, c));
  {
    torch::NoGradGuard guard;
    out_conv->weight.zero_();
    out_conv->bias.zero_();
  }
}

std::pair<torch::Tensor, torch::Tensor> DenoiserImpl::adapt(const torch::Tensor& t) {
  auto ab = adapt_mlp->forward(nn::timestep_embedding(t, opts.width).to(adapt_mlp[0]->as<torch::nn::Linear>()->weight.scalar_type()));
  return {ab.narrow(1, 0, opts.l), ab.narrow(1, opts.l, opts.l)};
}

void DenoiserImpl::zero_adapt_head() {
  torch::NoGradGuard guard;
  auto last = adapt_mlp[2]->as<torch::nn::Linear>();
  last->weight.zero_();
  last->bias.zero_();
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& z_t, const torch::Tensor& f_lq, const torch::Tensor& f_dr,
                                    const torch::Tensor& t) {
  if (!z_t.sizes().equals(f_lq.sizes()))
    throw ArgumentError("denoiser: f_lq spatial shape must equal z_t");
  if (z_t.dim() != 4 || z_t.size(1) != opts.latent_channels || z_t.size(2) % 4 != 0 || z_t.size(3) % 4 != 0)
    throw ArgumentError("denoiser: z_t must be (B, c, h, w) with h, w divisible by 4");
  if (t.numel() != z_t.size(0)) throw ArgumentError("denoiser: one step per sample required");
  torch::Tensor tokens;
  if (f_dr.defined()) {
    if (f_dr.dim() != 3 || f_dr.size(0) != z_t.size(0) || f_dr.size(1) != opts.d || f_dr.size(2) != opts.l)
      throw ArgumentError("denoiser: f_dr must be (B, d, l)");
    auto [alpha, beta] = adapt(t);
    tokens = alpha.unsqueeze(1) * f_dr + beta.unsqueeze(1);
  }
  const bool dr = tokens.defined();
  const bool every_level = dr && opts.all_levels;
  const auto dtype = in_conv->weight.scalar_type();
  auto emb = time_mlp->forward(nn::timestep_embedding(t, opts.width).to(dtype));

  auto h = in_conv(torch::cat({z_t, f_lq}, 1));
  if (dr) h = attn_in(h, tokens);
  auto h0 = enc0(h, emb);
  auto h1 = enc1(down1(h0), emb);
  if (every_level) h1 = attn1(h1, tokens);
  auto m = mid_a(down2(h1), emb);
  if (every_level) m = attn_mid(m, tokens);
  m = mid_b(m, emb);
  auto u1 = dec1(torch::cat({up2(upsample2(m)), h1}, 1), emb);
  if (every_level) u1 = attn_dec1(u1, tokens);
  auto u0 = dec0(torch::cat({up1(upsample2(u1)), h0}, 1), emb);
  if (every_level) u0 = attn_dec0(u0, tokens);
  return out_conv(torch::silu(out_norm(u0)));
}

DiffusionModel::DiffusionModel(const LdmConfig& c, int latent_channels, int d, int l)
    : schedule(make_schedule(c.T, parse_schedule(c.schedule))), cfg(c), use_dr(c.use_dr) {
  DenoiserOptions o;
  o.latent_channels = latent_channels;
  o.width = c.width;
  o.d = d;
  o.l = l;
  o.all_levels = c.dr_attn == "all_levels";
  net = Denoiser(o);
}

Checkpoint DiffusionModel::to_checkpoint(const std::string& config_hash, std::int64_t step,
                                         const nlohmann::json& parents) const {
  Checkpoint ck;
  ck.kind = "ldm";
  ck.config_hash = config_hash;
  ck.step = step;
  ck.meta = {{"T", cfg.T},
             {"schedule", cfg.schedule},
             {"width", cfg.width},
             {"dr_attn", cfg.dr_attn},
             {"use_dr", use_dr},
             {"latent_channels", net->opts.latent_channels},
             {"d", net->opts.d},
             {"l", net->opts.l},
             {"parents", parents}};
  nn::export_module(*net, "denoiser", ck.tensors);
  return ck;
}

DiffusionModel DiffusionModel::from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "ldm") throw FormatError("expected an ldm checkpoint, got '" + ck.kind + "'");
  try {
    LdmConfig c;
    c.T = ck.meta.at("T").get<int>();
    c.schedule = ck.meta.at("schedule").get<std::string>();
    c.width = ck.meta.at("width").get<int>();
    c.dr_attn = ck.meta.at("dr_attn").get<std::string>();
    c.use_dr = ck.meta.at("use_dr").get<bool>();
    DiffusionModel model(c, ck.meta.at("latent_channels").get<int>(), ck.meta.at("d").get<int>(),
                         ck.meta.at("l").get<int>());
    nn::import_module(*model.net, "denoiser", ck);
    model.net->eval();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ldm checkpoint metadata incomplete: ") + e.what());
  }
}

Conditions make_conditions(const RestorationModels& models, const torch::Tensor& lq) {
  if (models.ae == nullptr || models.diffusion == nullptr) throw ConfigError("missing: ae/ldm models");
  torch::NoGradGuard guard;
  Conditions c;
  c.f_lq = models.ae->encode_scaled(lq);
  if (models.diffusion->use_dr) {
    if (models.drm == nullptr) throw ConfigError("missing: drm");
    c.f_dr = drm::encode_dr_tiles(*models.drm, lq);
  }
  return c;
}

torch::Tensor ldm_loss(DiffusionModel& model, const torch::Tensor& z0, const Conditions& cond, const torch::Tensor& t,
                       const torch::Tensor& eps) {
  auto z_t = q_sample(z0, t, eps, model.schedule);
  auto pred = model.net->forward(z_t, cond.f_lq, model.use_dr ? cond.f_dr : torch::Tensor(), t);
  return (pred - eps).pow(2).mean();
}

LdmTrainer::LdmTrainer(DiffusionModel& model, int total_steps, std::uint64_t seed)
    : model_(model),
      optimizer_(model.net->parameters(), model.cfg.lr, total_steps),
      rng_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

double LdmTrainer::step_encoded(const torch::Tensor& z0, const Conditions& cond) {
  model_.net->train();
  auto t = torch::randint(0, model_.schedule.T, {z0.size(0)}, rng_, torch::kLong);
  auto eps = torch::randn(z0.sizes(), rng_, z0.scalar_type());
  optimizer_.zero_grad();
  auto loss = ldm_loss(model_, z0, cond, t, eps);
  loss.backward();
  optimizer_.step();
  return loss.item<double>();
}

double LdmTrainer::step(const RestorationModels& models, const std::vector<ImageTensor>& hq,
                        const std::vector<ImageTensor>& lq) {
  if (models.ae == nullptr) throw ConfigError("missing: ae");
  if (model_.use_dr && models.drm == nullptr) throw ConfigError("missing: drm");
  if (hq.size() != lq.size()) throw ArgumentError("ldm step: hq/lq count mismatch");
  torch::Tensor z0;
  {
    torch::NoGradGuard guard;
    z0 = models.ae->encode_scaled(nn::to_batch(hq));
  }
  return step_encoded(z0, make_conditions(models, nn::to_batch(lq)));
}

ReverseStep reverse_step(const torch::Tensor& z_t, int t, int t_prev, const torch::Tensor& eps_pred,
                         const NoiseSchedule& schedule, double eta, const torch::Tensor& noise) {
  if (t < 0 || t >= schedule.T || t_prev >= t || t_prev < -1) throw ArgumentError("reverse_step: bad step pair");
  const double ab = schedule.alpha_bar[t];
  const double ab_prev = t_prev >= 0 ? schedule.alpha_bar[t_prev] : 1.0;
  ReverseStep r;
  r.z0_hat = (z_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  r.z_prev = std::sqrt(ab_prev) * r.z0_hat + dir * eps_pred;
  if (sigma > 0.0) r.z_prev = r.z_prev + sigma * noise;
  return r;
}

std::vector<int> sampling_steps(int T, int steps) {
  if (steps < 1 || steps > T) throw ArgumentError("sampling steps must lie in [1, T]");
  std::vector<int> seq(steps);
  for (int i = 0; i < steps; ++i) seq[i] = static_cast<int>((static_cast<std::int64_t>(i + 1) * T) / steps) - 1;
  return seq;
}

torch::Tensor restore_batch(const RestorationModels& models, const torch::Tensor& lq, Sampler sampler, int steps,
                            std::span<const std::uint64_t> seeds) {
  if (models.ae == nullptr || models.diffusion == nullptr) throw ConfigError("missing: ae/ldm checkpoints");
  if (lq.dim() != 4 || static_cast<std::size_t>(lq.size(0)) != seeds.size())
    throw ArgumentError("restore: one seed per image required");
  if (lq.size(2) % models.ae->factor() != 0 || lq.size(3) % models.ae->factor() != 0)
    throw ArgumentError("restore: image sides must be divisible by " + std::to_string(models.ae->factor()));
  torch::NoGradGuard guard;
  auto& model = *models.diffusion;
  model.net->eval();
  const auto cond = make_conditions(models, lq);
  std::vector<at::Generator> gens;
  for (auto s : seeds) gens.push_back(at::make_generator<at::CPUGeneratorImpl>(s));
  const auto draw = [&](const torch::Tensor& like) {
    auto shape = like.sizes().vec();
    shape[0] = 1;
    std::vector<torch::Tensor> parts;
    for (auto& g : gens) parts.push_back(torch::randn(shape, g, like.scalar_type()));
    return torch::cat(parts);
  };
  auto z = draw(cond.f_lq);
  const double eta = sampler == Sampler::kDdpm ? 1.0 : 0.0;
  const auto seq = sampling_steps(model.schedule.T, steps);
  for (int i = static_cast<int>(seq.size()) - 1; i >= 0; --i) {
    const int t = seq[i];
    const int t_prev = i > 0 ? seq[i - 1] : -1;
    auto tt = torch::full({z.size(0)}, t, torch::kLong);
    auto eps = model.net->forward(z, cond.f_lq, model.use_dr ? cond.f_dr : torch::Tensor(), tt);
    torch::Tensor noise;
    if (eta > 0.0 && t_prev >= 0) noise = draw(z);
    z = reverse_step(z, t, t_prev, eps, model.schedule, eta, noise).z_prev;
  }
  return models.ae->decode_scaled(z);
}

ImageTensor restore(const RestorationModels& models, const ImageTensor& lq, Sampler sampler, int steps,
                    std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return nn::to_image(restore_batch(models, nn::to_tensor(lq).unsqueeze(0), sampler, steps, seeds));
}

LdmTrainResult train_ldm(const PairCorpus& corpus, const latent::AutoencoderModel& ae, const drm::DRModel* drm,
                         const LdmConfig& cfg, std::uint64_t seed, const nn::ProgressFn& progress,
                         std::array<int, 2> dr_shape) {
  if (cfg.use_dr && drm == nullptr) throw ConfigError("missing: drm");
  if (corpus.size() == 0) throw ConfigError("LDM corpus is empty");
  nn::configure_runtime();

  const int d = drm ? drm->config().d : dr_shape[0];
  const int l = drm ? drm->config().l : dr_shape[1];
  LdmTrainResult result = [&] {
    nn::SeededInit init(seed);
    return LdmTrainResult{DiffusionModel(cfg, ae.channels(), d, l), {}};
  }();
  auto& model = result.model;

  // Frozen encodings, computed once.
  std::vector<torch::Tensor> z0_parts, lq_parts, dr_parts;
  RestorationModels frozen{&ae, drm, &model};
  for (std::size_t start = 0; start < corpus.size(); start += kEncodeChunk) {
    const auto end = std::min(corpus.size(), start + static_cast<std::size_t>(kEncodeChunk));
    std::vector<ImageTensor> hq(corpus.hq.begin() + start, corpus.hq.begin() + end);
    std::vector<ImageTensor> lq(corpus.lq.begin() + start, corpus.lq.begin() + end);
    z0_parts.push_back(ae.encode_scaled(nn::to_batch(hq)));
    auto cond = make_conditions(frozen, nn::to_batch(lq));
    lq_parts.push_back(cond.f_lq);
    if (cond.f_dr.defined()) dr_parts.push_back(cond.f_dr);
  }
  const auto z0_all = torch::cat(z0_parts);
  const auto lq_all = torch::cat(lq_parts);
  const auto dr_all = dr_parts.empty() ? torch::Tensor() : torch::cat(dr_parts);

  LdmTrainer trainer(model, cfg.steps, seed ^ 0x5851f42d4c957f2dULL);
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto batch = std::min<std::size_t>(cfg.batch, corpus.size());
  for (int s = 0; s < cfg.steps; ++s) {
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + cursor, order.begin() + cursor + batch));
    cursor += batch;
    Conditions cond{lq_all.index_select(0, idx), dr_all.defined() ? dr_all.index_select(0, idx) : torch::Tensor()};
    const double loss = trainer.step_encoded(z0_all.index_select(0, idx), cond);
    nn::LossRow row{s, {{"mse", loss}}};
    if (progress) progress(row);
    result.history.push_back(std::move(row));
  }
  model.net->eval();
  return result;
}

}  // namespace drbfr::ldm
