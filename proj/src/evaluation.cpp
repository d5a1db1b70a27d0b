// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "evaluation.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>

#include "errors.hpp"

namespace drbfr::eval {

namespace {

constexpr std::size_t kRestoreChunk = 25;

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

int clamp_count(const PairCorpus& corpus, int n) {
  if (n <= 0) throw ArgumentError("evaluation needs n > 0");
  if (corpus.size() == 0) throw DataError("evaluation corpus is empty");
  return std::min<int>(n, static_cast<int>(corpus.size()));
}

}  // namespace

MetricReport score_images(const std::vector<ImageTensor>& outputs, const std::vector<ImageTensor>& references,
                          int ssim_window) {
  if (outputs.size() != references.size()) throw ArgumentError("score_images: count mismatch");
  MetricReport r;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    r.psnr.push_back(psnr(outputs[i], references[i]));
    r.ssim.push_back(ssim(outputs[i], references[i], ssim_window));
  }
  r.mean_psnr = mean_of(r.psnr);
  r.mean_ssim = mean_of(r.ssim);
  return r;
}

MetricReport restore_metrics(const ldm::RestorationModels& models, const PairCorpus& corpus, int n,
                             ldm::Sampler sampler, int steps, std::uint64_t seed, int ssim_window) {
  const int count = clamp_count(corpus, n);
  std::vector<ImageTensor> outputs, refs;
  for (std::size_t start = 0; start < static_cast<std::size_t>(count); start += kRestoreChunk) {
    const auto end = std::min<std::size_t>(count, start + kRestoreChunk);
    std::vector<ImageTensor> lq(corpus.lq.begin() + start, corpus.lq.begin() + end);
    std::vector<std::uint64_t> seeds;
    for (auto i = start; i < end; ++i) seeds.push_back(seed + i);
    auto out = ldm::restore_batch(models, nn::to_batch(lq), sampler, steps, seeds);
    for (std::int64_t i = 0; i < out.size(0); ++i) outputs.push_back(nn::to_image(out[i]));
    refs.insert(refs.end(), corpus.hq.begin() + start, corpus.hq.begin() + end);
  }
  return score_images(outputs, refs, ssim_window);
}

MetricReport lq_metrics(const PairCorpus& corpus, int n, int ssim_window) {
  const int count = clamp_count(corpus, n);
  return score_images({corpus.lq.begin(), corpus.lq.begin() + count}, {corpus.hq.begin(), corpus.hq.begin() + count},
                      ssim_window);
}

DrReconReport dr_recon(const drm::DRModel& model, const PairCorpus& corpus, int n, std::uint64_t seed) {
  const int count = clamp_count(corpus, n);
  if (count < 2) throw ArgumentError("dr_recon needs at least two images");
  std::mt19937_64 rng(seed);
  std::vector<PairedPatchSet> sets;
  std::vector<DRFeature> drs;
  for (int i = 0; i < count; ++i) {
    sets.push_back(random_patch_pair(corpus.hq[i], corpus.lq[i], model.patch_size(), rng));
    drs.push_back(drm::encode_dr(model, sets.back().lq_patches[0]));
  }
  const bool labeled = corpus.class_labels.size() == corpus.size() &&
                       std::any_of(corpus.class_labels.begin(), corpus.class_labels.end(), [](int l) { return l >= 0; });
  DrReconReport r;
  r.n = count;
  for (int i = 0; i < count; ++i) {
    int j = (i + 1) % count;
    if (labeled)
      while (j != i && corpus.class_labels[j] == corpus.class_labels[i]) j = (j + 1) % count;
    const auto& s = sets[i];
    r.baseline_psnr += psnr(s.hq_patches[1], s.lq_patches[1]);
    r.recon_psnr += psnr(drm::reconstruct_lq(model, s.hq_patches[1], drs[i]), s.lq_patches[1]);
    r.swap_psnr += psnr(drm::reconstruct_lq(model, s.hq_patches[1], drs[j]), s.lq_patches[1]);
  }
  r.baseline_psnr /= count;
  r.recon_psnr /= count;
  r.swap_psnr /= count;
  return r;
}

SeparabilityReport separability(const drm::DRModel& model, const PairCorpus& corpus, bool embed) {
  if (corpus.class_labels.size() != corpus.size() || corpus.content_ids.size() != corpus.size())
    throw DataError("separability needs class labels and content ids for every image");
  if (std::any_of(corpus.class_labels.begin(), corpus.class_labels.end(), [](int l) { return l < 0; }))
    throw DataError("separability needs a class-structured corpus (degrade.mode = classes)");
  std::vector<DRFeature> features;
  for (const auto& lq : corpus.lq) features.push_back(drm::encode_dr_image(model, lq));
  return dr_separability(features, {{"degradation", corpus.class_labels}, {"content", corpus.content_ids}}, embed);
}

long required_ablation_steps(const std::vector<std::string>& variants, int drm_steps, int ldm_steps) {
  long total = 0;
  for (const auto& v : variants) total += ldm_steps + (v == "DR-None" ? 0 : drm_steps);
  return total;
}

DrmConfig variant_drm_config(const DrmConfig& base, const std::string& variant) {
  DrmConfig c = base;
  if (variant == "DR-CL") {
    c.recon_weight = 0.0;
    c.lambda1 = 1.0;
    c.lambda2 = 0.0;
  } else if (variant == "DR-REC") {
    c.lambda1 = 0.0;
    c.lambda2 = 0.0;
  } else if (variant != "DR-ALL") {
    throw ConfigError("no DRM for ablation variant '" + variant + "'");
  }
  return c;
}

CachedDrm train_or_load_drm(const PairCorpus& train, const DrmConfig& cfg, int patch_size, std::uint64_t seed,
                            const std::filesystem::path& work_dir, const std::string& corpus_id,
                            const nn::ProgressFn& progress) {
  const nlohmann::json key_doc{{"stage", "drm"}, {"config", cfg}, {"patch_size", patch_size}, {"seed", seed},
                               {"corpus", corpus_id}};
  const auto key = short_sha256(key_doc.dump());
  const auto path = work_dir / ("drm-" + key + ".ckpt");
  if (std::filesystem::exists(path)) return {drm::DRModel::from_checkpoint(Checkpoint::load(path)), path};
  auto result = drm::train_drm(train, cfg, patch_size, seed, progress);
  std::filesystem::create_directories(work_dir);
  result.model.to_checkpoint(key, cfg.steps).save(path);
  return {std::move(result.model), path};
}

CachedLdm train_or_load_ldm(const PairCorpus& train, const latent::AutoencoderModel& ae, const std::string& ae_hash,
                            const CachedDrm* drm, const LdmConfig& cfg, std::array<int, 2> dr_shape,
                            std::uint64_t seed, const std::filesystem::path& work_dir, const std::string& corpus_id,
                            const nn::ProgressFn& progress) {
  const std::string drm_hash = drm ? file_hash(drm->path) : "";
  const nlohmann::json key_doc{{"stage", "ldm"}, {"config", cfg},        {"seed", seed},
                               {"ae", ae_hash},  {"drm", drm_hash},      {"dr_shape", dr_shape},
                               {"corpus", corpus_id}};
  const auto key = short_sha256(key_doc.dump());
  const auto path = work_dir / ("ldm-" + key + ".ckpt");
  if (std::filesystem::exists(path)) return {ldm::DiffusionModel::from_checkpoint(Checkpoint::load(path)), path};
  auto result = ldm::train_ldm(train, ae, drm ? &drm->model : nullptr, cfg, seed, progress, dr_shape);
  std::filesystem::create_directories(work_dir);
  const nlohmann::json parents{{"ae", ae_hash}, {"drm", drm ? nlohmann::json(drm_hash) : nlohmann::json()}};
  result.model.to_checkpoint(key, cfg.steps, parents).save(path);
  return {std::move(result.model), path};
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const PairCorpus& train, const PairCorpus& test,
                                      const latent::AutoencoderModel& ae, const std::string& ae_hash,
                                      const AblationOptions& options) {
  static const std::vector<std::string> kKnown{"DR-None", "DR-CL", "DR-REC", "DR-ALL"};
  if (options.variants.empty()) throw ConfigError("ablation needs at least one variant");
  for (const auto& v : options.variants)
    if (std::find(kKnown.begin(), kKnown.end(), v) == kKnown.end())
      throw ConfigError("unknown ablation variant '" + v + "'");
  for (const auto& m : options.metrics)
    if (m != "psnr" && m != "ssim") throw ConfigError("unknown metric '" + m + "'");
  if (options.work_dir.empty()) throw ConfigError("ablation needs a work directory");
  const long required = required_ablation_steps(options.variants, options.drm_steps, options.ldm_steps);
  if (required > options.budget) {
    std::string detail;
    for (const auto& v : options.variants) {
      if (!detail.empty()) detail += ", ";
      detail += v + ": " + (v == "DR-None" ? "" : "drm " + std::to_string(options.drm_steps) + " + ") + "ldm " +
                std::to_string(options.ldm_steps);
    }
    throw ConfigError("ablation needs " + std::to_string(required) + " optimizer steps (" + detail +
                      ") but the budget is " + std::to_string(options.budget));
  }

  std::mutex log_mutex;
  const auto log = [&](const std::string& msg) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(msg);
  };

  const auto run_variant = [&](const std::string& variant) {
    log(variant + ": start");
    std::optional<CachedDrm> drm_model;
    if (variant != "DR-None") {
      auto dc = variant_drm_config(cfg.drm, variant);
      dc.steps = options.drm_steps;
      drm_model.emplace(train_or_load_drm(train, dc, cfg.data.patch_size, options.seed, options.work_dir,
                                          options.corpus_id));
      log(variant + ": drm " + drm_model->path.filename().string());
    }
    auto lc = cfg.ldrm;
    lc.steps = options.ldm_steps;
    lc.use_dr = variant != "DR-None";
    auto ldm_model = train_or_load_ldm(train, ae, ae_hash, drm_model ? &*drm_model : nullptr, lc,
                                       {cfg.drm.d, cfg.drm.l}, options.seed, options.work_dir, options.corpus_id);
    log(variant + ": ldm " + ldm_model.path.filename().string());
    ldm::RestorationModels models{&ae, drm_model ? &drm_model->model : nullptr, &ldm_model.model};
    auto report = restore_metrics(models, test, options.n_eval, options.sampler, options.sample_steps,
                                  options.seed + 1, options.ssim_window);
    report.checkpoint_hash = file_hash(ldm_model.path);
    report.run_id = variant;
    std::vector<AblationRow> rows;
    for (const auto& metric : options.metrics) {
      const auto& values = metric == "psnr" ? report.psnr : report.ssim;
      rows.push_back({variant, metric, mean_of(values), std_of(values), static_cast<int>(values.size()),
                      report.checkpoint_hash});
    }
    log(variant + ": psnr " + std::to_string(report.mean_psnr));
    return rows;
  };

  std::vector<AblationRow> table;
  if (options.parallel) {
    std::vector<std::future<std::vector<AblationRow>>> jobs;
    for (const auto& v : options.variants) jobs.push_back(std::async(std::launch::async, run_variant, v));
    for (auto& j : jobs) {
      auto rows = j.get();
      table.insert(table.end(), rows.begin(), rows.end());
    }
  } else {
    for (const auto& v : options.variants) {
      auto rows = run_variant(v);
      table.insert(table.end(), rows.begin(), rows.end());
    }
  }
  return table;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "variant,metric,mean,std,n,checkpoint_hash\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.variant << ',' << r.metric << ',' << r.mean << ',' << r.std << ',' << r.n << ',' << r.checkpoint_hash
        << '\n';
}

}  // namespace drbfr::eval
