// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "dataset.hpp"
#include "degrade.hpp"
#include "errors.hpp"
#include "grad_check.hpp"
#include "ldrm.hpp"
#include "test_util.hpp"

using namespace drbfr;

namespace {

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.pixels()[i]) - b.pixels()[i]));
  return m;
}

LdmConfig tiny_ldm(bool use_dr = true, const std::string& attn = "all_levels") {
  LdmConfig c;
  c.T = 40;
  c.width = 8;
  c.batch = 2;
  c.steps = 2;
  c.sample_steps = 5;
  c.use_dr = use_dr;
  c.dr_attn = attn;
  return c;
}

struct TinyModels {
  latent::AutoencoderModel ae;
  drm::DRModel drm;
  PairCorpus corpus;
};

TinyModels tiny_models() {
  AeConfig ac;
  ac.width = 8;
  ac.batch = 2;
  ac.steps = 1;
  ac.min_corpus = 1;
  DrmConfig dc;
  dc.d = 2;
  dc.l = 4;
  dc.channels = 2;
  dc.proj_dim = 8;
  PairCorpus corpus;
  for (int i = 0; i < 4; ++i) {
    corpus.hq.push_back(generate_toy_face(i, 32));
    corpus.lq.push_back(apply_degradation(corpus.hq.back(), DegradationParams{1.5, 2.0, 6.0, 70, 1}));
  }
  torch::manual_seed(0);
  auto ae = latent::train_autoencoder(corpus.hq, ac, 1).model;
  drm::DRModel dm(dc, 16);
  dm.train(false);
  return {std::move(ae), std::move(dm), std::move(corpus)};
}

}  // namespace

TEST_CASE("noise schedules") {
  const auto lin = ldm::make_schedule(400, ldm::ScheduleKind::kLinear);
  REQUIRE(lin.beta.size() == 400);
  CHECK(lin.beta.front() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lin.beta.back() == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(lin.alpha_bar[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-12));
  for (const auto kind : {ldm::ScheduleKind::kLinear, ldm::ScheduleKind::kCosine}) {
    const auto s = ldm::make_schedule(400, kind);
    CHECK(s.alpha_bar[0] > 0.99);
    CHECK(s.alpha_bar[399] < 0.05);
    double prod = 1.0;
    for (int t = 0; t < 400; ++t) {
      CHECK((s.beta[t] > 0.0 && s.beta[t] < 1.0));
      prod *= 1.0 - s.beta[t];
      CHECK(s.alpha_bar[t] == doctest::Approx(prod).epsilon(1e-12));
      if (t > 0) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
  }
  CHECK_THROWS_AS(ldm::make_schedule(1, ldm::ScheduleKind::kLinear), ArgumentError);
  CHECK(ldm::parse_schedule("cosine") == ldm::ScheduleKind::kCosine);
  CHECK_THROWS_AS(ldm::parse_schedule("sigmoid"), ArgumentError);
  CHECK(ldm::parse_sampler("ddpm") == ldm::Sampler::kDdpm);
  CHECK_THROWS_AS(ldm::parse_sampler("euler"), ArgumentError);
}

TEST_CASE("q_sample closed forms") {
  const ldm::NoiseSchedule s{2, {0.1, 0.7222222222222222}, {0.9, 0.25}};
  const auto one = torch::ones({1}, torch::kFloat64);
  CHECK(ldm::q_sample(one, 1, one, s).item<double>() == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-12));
  CHECK(ldm::q_sample(one * 3, 1, one * 0, s).item<double>() == 1.5);

  const auto lin = ldm::make_schedule(400, ldm::ScheduleKind::kLinear);
  const auto z0 = torch::randn({2, 4, 8, 8}, torch::kFloat64);
  const auto eps = torch::randn({2, 4, 8, 8}, torch::kFloat64);
  CHECK(torch::allclose(ldm::q_sample(z0, 0, eps, lin), std::sqrt(1 - 1e-4) * z0 + 1e-2 * eps));
  const auto per = ldm::q_sample(z0, torch::tensor({3, 250}, torch::kInt64), eps, lin);
  CHECK(torch::allclose(per[0], ldm::q_sample(z0[0], 3, eps[0], lin)));
  CHECK(torch::allclose(per[1], ldm::q_sample(z0[1], 250, eps[1], lin)));

  CHECK_THROWS_AS(ldm::q_sample(z0, 400, eps, lin), ArgumentError);
  CHECK_THROWS_AS(ldm::q_sample(z0, -1, eps, lin), ArgumentError);
  CHECK_THROWS_AS(ldm::q_sample(z0, 3, eps.narrow(0, 0, 1), lin), ArgumentError);
}

TEST_CASE("q_sample marginal variance") {
  const auto lin = ldm::make_schedule(400, ldm::ScheduleKind::kLinear);
  torch::manual_seed(11);
  const auto z0 = torch::zeros({200000}, torch::kFloat64);
  for (int t : {0, 10, 100, 250, 399}) {
    const auto out = ldm::q_sample(z0, t, torch::randn({200000}, torch::kFloat64), lin);
    CHECK(out.var().item<double>() == doctest::Approx(1.0 - lin.alpha_bar[t]).epsilon(0.05));
  }
}

TEST_CASE("reverse step identities") {
  const auto lin = ldm::make_schedule(400, ldm::ScheduleKind::kLinear);
  torch::manual_seed(12);
  const auto z0 = torch::randn({3, 4, 4}, torch::kFloat64);
  const auto eps = torch::randn({3, 4, 4}, torch::kFloat64);
  const auto zero = torch::zeros_like(z0);

  // Oracle noise recovers z0, and the ancestral mean is the Gaussian posterior mean.
  const auto z1 = ldm::q_sample(z0, 1, eps, lin);
  const auto r = ldm::reverse_step(z1, 1, 0, eps, lin, 1.0, zero);
  CHECK((r.z0_hat - z0).abs().max().item<double>() <= 1e-5);
  for (int t : {1, 57, 399}) {
    const auto zt = ldm::q_sample(z0, t, eps, lin);
    const double ab = lin.alpha_bar[t], abp = lin.alpha_bar[t - 1], beta = lin.beta[t];
    const auto mean = std::sqrt(abp) * beta / (1 - ab) * z0 + std::sqrt(1 - beta) * (1 - abp) / (1 - ab) * zt;
    const auto step = ldm::reverse_step(zt, t, t - 1, eps, lin, 1.0, zero);
    CHECK((step.z_prev - mean).abs().max().item<double>() <= 1e-9);
    const auto noise = torch::randn_like(z0);
    const auto noisy = ldm::reverse_step(zt, t, t - 1, eps, lin, 1.0, noise);
    const double var = beta * (1 - abp) / (1 - ab);
    CHECK(torch::allclose(noisy.z_prev, mean + std::sqrt(var) * noise, 1e-9, 1e-9));
  }

  // Deterministic DDIM with oracle noise lands on the forward marginal.
  const auto z300 = ldm::q_sample(z0, 300, eps, lin);
  const auto d = ldm::reverse_step(z300, 300, 120, eps, lin, 0.0, torch::randn_like(z0));
  CHECK(torch::allclose(d.z_prev, ldm::q_sample(z0, 120, eps, lin), 1e-9, 1e-9));
  const auto last = ldm::reverse_step(z300, 300, -1, eps, lin, 0.0, zero);
  CHECK(torch::allclose(last.z_prev, z0, 1e-9, 1e-9));

  CHECK_THROWS_AS(ldm::reverse_step(z1, 1, 1, eps, lin, 0.0, zero), ArgumentError);
  CHECK_THROWS_AS(ldm::reverse_step(z1, 400, 3, eps, lin, 0.0, zero), ArgumentError);
}

TEST_CASE("sampling steps") {
  const auto s = ldm::sampling_steps(400, 50);
  REQUIRE(s.size() == 50);
  CHECK(s.front() == 7);
  CHECK(s.back() == 399);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] - s[i - 1] == 8);
  const auto all = ldm::sampling_steps(10, 10);
  for (int i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK(ldm::sampling_steps(400, 1) == std::vector<int>{399});
  CHECK_THROWS_AS(ldm::sampling_steps(10, 0), ArgumentError);
  CHECK_THROWS_AS(ldm::sampling_steps(10, 11), ArgumentError);
}

TEST_CASE("denoiser contracts") {
  for (const bool all_levels : {true, false}) {
    CAPTURE(all_levels);
    torch::manual_seed(13);
    ldm::Denoiser net(ldm::DenoiserOptions{4, 8, 2, 4, all_levels});
    net->eval();
    const auto z = torch::randn({2, 4, 8, 8});
    const auto f = torch::randn({2, 4, 8, 8});
    const auto t = torch::tensor({3, 17}, torch::kInt64);

    // A fresh adapt head emits alpha = 1, beta = 0.
    auto [alpha, beta] = net->adapt(t);
    CHECK(torch::equal(alpha, torch::ones_like(alpha)));
    CHECK(torch::equal(beta, torch::zeros_like(beta)));

    // The zero-initialized output layer predicts zeros; perturb it to make the bypass check meaningful.
    {
      torch::NoGradGuard g;
      for (auto& p : net->parameters()) p.add_(torch::randn_like(p) * 0.05);
    }
    const auto out = net->forward(z, f, torch::randn({2, 2, 4}), t);
    CHECK(out.sizes() == z.sizes());

    net->zero_adapt_head();
    const auto bypass = net->forward(z, f, torch::zeros({2, 2, 4}), t);
    const auto none = net->forward(z, f, torch::Tensor(), t);
    CHECK((bypass - none).abs().max().item<double>() <= 1e-6);
    CHECK((out - none).abs().max().item<double>() > 1e-4);

    CHECK_THROWS_AS(net->forward(z, f.narrow(2, 0, 4), torch::Tensor(), t), ArgumentError);
    CHECK_THROWS_AS(net->forward(z, f, torch::zeros({2, 3, 4}), t), ArgumentError);
    CHECK_THROWS_AS(net->forward(z, f, torch::Tensor(), t.narrow(0, 0, 1)), ArgumentError);
  }
}

TEST_CASE("cross-attention weights are a distribution over tokens") {
  torch::manual_seed(14);
  ldm::CrossAttention attn(8, 5);
  const auto w = attn->attention_weights(torch::randn({2, 8, 4, 4}), torch::randn({2, 3, 5}));
  CHECK(w.sizes() == torch::IntArrayRef({2, 16, 3}));
  CHECK((w.sum(-1) - 1).abs().max().item<double>() <= 1e-6);
  CHECK(w.min().item<double>() >= 0.0);
  // Zero tokens contribute nothing.
  const auto h = torch::randn({1, 8, 4, 4});
  CHECK(torch::equal(attn->forward(h, torch::zeros({1, 3, 5})), h));
}

TEST_CASE("LDM loss gradient matches central differences") {
  torch::manual_seed(15);
  auto cfg = tiny_ldm();
  cfg.width = 4;
  ldm::DiffusionModel model(cfg, 2, 2, 4);
  model.net->to(torch::kFloat64);
  model.net->train();
  std::int64_t count = 0;
  for (const auto& p : model.net->parameters()) count += p.numel();
  CHECK(count <= 10000);
  {
    torch::NoGradGuard g;
    for (auto& p : model.net->parameters()) p.add_(torch::randn_like(p) * 0.05);
  }
  const auto z0 = torch::randn({2, 2, 4, 4}, torch::kFloat64);
  const ldm::Conditions cond{torch::randn({2, 2, 4, 4}, torch::kFloat64), torch::randn({2, 2, 4}, torch::kFloat64)};
  const auto t = torch::tensor({5, 31}, torch::kInt64);
  const auto eps = torch::randn({2, 2, 4, 4}, torch::kFloat64);
  const auto params = model.net->parameters();
  const auto r = test::gradient_check(params, [&] { return ldm::ldm_loss(model, z0, cond, t, eps); }, 60, 7);
  CHECK(r.compared > 0);
  CHECK(r.relative_error <= 1e-3);
}

TEST_CASE("LDM training keeps frozen models fixed") {
  auto m = tiny_models();
  ldm::DiffusionModel model(tiny_ldm(), m.ae.channels(), 2, 4);
  const ldm::RestorationModels rm{&m.ae, &m.drm, &model};
  const auto snapshot = [](const torch::nn::Module& mod) {
    std::vector<torch::Tensor> out;
    for (const auto& p : mod.parameters()) out.push_back(p.detach().clone());
    return out;
  };
  const auto ae_before = snapshot(*m.ae.net);
  const auto drm_before = snapshot(*m.drm.encoder);
  const auto den_before = snapshot(*model.net);
  ldm::LdmTrainer trainer(model, 2, 3);
  const double loss = trainer.step(rm, {m.corpus.hq[0], m.corpus.hq[1]}, {m.corpus.lq[0], m.corpus.lq[1]});
  // The zero-initialized output makes the first prediction exactly zero.
  CHECK(loss == doctest::Approx(1.0).epsilon(0.2));
  const auto ae_after = snapshot(*m.ae.net);
  const auto drm_after = snapshot(*m.drm.encoder);
  const auto den_after = snapshot(*model.net);
  for (std::size_t i = 0; i < ae_before.size(); ++i) CHECK(torch::equal(ae_before[i], ae_after[i]));
  for (std::size_t i = 0; i < drm_before.size(); ++i) CHECK(torch::equal(drm_before[i], drm_after[i]));
  bool changed = false;
  for (std::size_t i = 0; i < den_before.size(); ++i) changed |= !torch::equal(den_before[i], den_after[i]);
  CHECK(changed);
}

TEST_CASE("initial LDM loss is close to one") {
  torch::manual_seed(16);
  ldm::DiffusionModel model(tiny_ldm(), 4, 2, 4);
  const auto z0 = torch::randn({64, 4, 8, 8});
  const ldm::Conditions cond{torch::randn({64, 4, 8, 8}), torch::randn({64, 2, 4})};
  const auto t = torch::randint(0, 40, {64}, torch::kInt64);
  const double loss = ldm::ldm_loss(model, z0, cond, t, torch::randn({64, 4, 8, 8})).item<double>();
  CHECK(loss == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("restore contracts") {
  auto m = tiny_models();
  auto train = ldm::train_ldm(m.corpus, m.ae, &m.drm, tiny_ldm(), 21);
  CHECK(train.history.size() == 2);
  const ldm::RestorationModels rm{&m.ae, &m.drm, &train.model};
  const auto& lq = m.corpus.lq[2];
  const auto a = ldm::restore(rm, lq, ldm::Sampler::kDdim, 5, 9);
  const auto b = ldm::restore(rm, lq, ldm::Sampler::kDdim, 5, 9);
  CHECK(a == b);
  CHECK(a.height() == 32);
  for (float v : a.pixels()) CHECK((std::isfinite(v) && v >= 0.0f && v <= 1.0f));
  const auto c = ldm::restore(rm, lq, ldm::Sampler::kDdpm, 5, 9);
  CHECK(c == ldm::restore(rm, lq, ldm::Sampler::kDdpm, 5, 9));
  CHECK_FALSE(c == ldm::restore(rm, lq, ldm::Sampler::kDdpm, 5, 10));

  // Batched restoration matches per-image calls with the same seeds.
  const std::vector<std::uint64_t> seeds{9, 4};
  const auto batch = ldm::restore_batch(rm, nn::to_batch({lq, m.corpus.lq[3]}), ldm::Sampler::kDdim, 5, seeds);
  // Batch size changes the GEMM blocking, so agreement is to rounding only.
  CHECK(max_abs_diff(nn::to_image(batch[0]), a) <= 1e-5);
  CHECK(max_abs_diff(nn::to_image(batch[1]), ldm::restore(rm, m.corpus.lq[3], ldm::Sampler::kDdim, 5, 4)) <= 1e-5);

  CHECK_THROWS_AS(ldm::restore(rm, generate_toy_face(1, 34), ldm::Sampler::kDdim, 5, 1), ArgumentError);
  const ldm::RestorationModels no_drm{&m.ae, nullptr, &train.model};
  CHECK_THROWS_AS(ldm::restore(no_drm, lq, ldm::Sampler::kDdim, 5, 1), ConfigError);
  try {
    ldm::make_conditions(no_drm, nn::to_batch({lq}));
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("missing: drm") != std::string::npos);
  }
  const ldm::RestorationModels no_ae{nullptr, &m.drm, &train.model};
  CHECK_THROWS_AS(ldm::restore(no_ae, lq, ldm::Sampler::kDdim, 5, 1), ConfigError);
}

TEST_CASE("diffusion checkpoint round trip") {
  auto m = tiny_models();
  auto r = ldm::train_ldm(m.corpus, m.ae, nullptr, tiny_ldm(false), 22, {}, {2, 4});
  CHECK_FALSE(r.model.use_dr);
  test::TempDir dir;
  r.model.to_checkpoint("cfg", 2, {{"ae", "x"}}).save(dir.path() / "ldm.ckpt");
  auto back = ldm::DiffusionModel::from_checkpoint(Checkpoint::load(dir.path() / "ldm.ckpt"));
  CHECK_FALSE(back.use_dr);
  CHECK(back.cfg.T == 40);
  const ldm::RestorationModels a{&m.ae, nullptr, &r.model}, b{&m.ae, nullptr, &back};
  CHECK(ldm::restore(a, m.corpus.lq[0], ldm::Sampler::kDdim, 4, 3) ==
        ldm::restore(b, m.corpus.lq[0], ldm::Sampler::kDdim, 4, 3));
  CHECK_THROWS_AS(ldm::train_ldm(m.corpus, m.ae, nullptr, tiny_ldm(true), 22), ConfigError);
}
