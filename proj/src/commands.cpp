// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "manifest.hpp"

namespace drbfr::cmd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kLogEvery = 100;

RunConfig effective(const RunConfig& cfg, const CommonOptions& opts) {
  RunConfig c = cfg;
  if (opts.seed) c.seed = *opts.seed;
  c.validate();
  return c;
}

void say(const CommonOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

nn::ProgressFn progress_logger(const CommonOptions& opts, const std::string& stage, int total) {
  if (!opts.log) return {};
  return [&opts, stage, total](const nn::LossRow& row) {
    if (row.step % kLogEvery != 0 && row.step + 1 != total) return;
    std::ostringstream line;
    line << stage << " step " << row.step + 1 << "/" << total;
    for (const auto& [name, value] : row.values) line << " " << name << "=" << value;
    opts.log(line.str());
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json params_json(const ManifestEntry& e) {
  return {{"sigma", e.params.sigma}, {"r", e.params.r},       {"delta", e.params.delta},
          {"q", e.params.q},         {"seed", e.params.seed}, {"class_label", e.class_label},
          {"content_id", e.content_id}};
}

fs::path corpus_root(const RunConfig& cfg) { return fs::path(cfg.data.root); }

fs::path runs_parent(const CommonOptions& opts) { return opts.out.empty() ? fs::path("runs") : opts.out; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_checkpoint(const std::string& path, const std::string& stage) {
  if (path.empty() || !fs::exists(path)) throw ConfigError("missing: " + stage);
}

// Writes one split; returns the number of pairs written.
int write_split(const DatasetManifest& manifest, const fs::path& dir, bool resume, const CommonOptions& opts) {
  const auto text = manifest_to_json(manifest);
  const auto manifest_path = dir / "manifest.json";
  const auto n = manifest.entries.size();
  const auto pair_done = [&](std::size_t i) {
    const auto name = std::to_string(i);
    return fs::exists(dir / "hq" / (name + ".png")) && fs::exists(dir / "lq" / (name + ".png")) &&
           fs::exists(dir / "params" / (name + ".json"));
  };

  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!fs::exists(manifest_path) || read_file(manifest_path) != text)
      throw DataError(dir.string() + " holds a different corpus; refusing to overwrite");
    std::size_t done = 0;
    for (std::size_t i = 0; i < n; ++i) done += pair_done(i) ? 1 : 0;
    if (done == n) {
      say(opts, dir.string() + ": complete, nothing to do");
      return 0;
    }
    if (!resume)
      throw DataError(dir.string() + " holds a partial corpus (" + std::to_string(done) + "/" + std::to_string(n) +
                      "); rerun with --resume");
  }

  fs::create_directories(dir / "hq");
  fs::create_directories(dir / "lq");
  fs::create_directories(dir / "params");
  if (!fs::exists(manifest_path)) write_text(manifest_path, text);
  int written = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pair_done(i)) continue;
    const auto& e = manifest.entries[i];
    const auto name = std::to_string(i);
    const auto hq = materialize_hq(e, manifest.image_size);
    save_png(hq, dir / "hq" / (name + ".png"));
    save_png(apply_degradation(hq, e.params), dir / "lq" / (name + ".png"));
    write_text(dir / "params" / (name + ".json"), params_json(e).dump(2) + "\n");
    ++written;
  }
  say(opts, dir.string() + ": wrote " + std::to_string(written) + " pairs");
  return written;
}

json train_summary(const std::string& stage, const fs::path& run_dir, const fs::path& ckpt,
                   const RunConfig& cfg, const std::vector<nn::LossRow>& history) {
  json j{{"stage", stage},
         {"run_dir", run_dir.string()},
         {"checkpoint", ckpt.string()},
         {"checkpoint_hash", file_hash(ckpt)},
         {"config_hash", cfg.hash()},
         {"steps", history.size()}};
  if (!history.empty()) j["final_loss"] = history.back().values.front().second;
  return j;
}

// Verifies that the LDM was trained against these AE/DRM files.
void check_hash_chain(const Checkpoint& ldm_ck, const std::string& ae_hash, const std::string& drm_hash,
                      bool allow_mismatch, const CommonOptions& opts) {
  const auto parents = ldm_ck.meta.value("parents", json::object());
  std::vector<std::string> problems;
  const auto expect = [&](const char* stage, const std::string& actual) {
    const auto recorded = parents.contains(stage) && parents[stage].is_string() ? parents[stage].get<std::string>() : "";
    if (recorded != actual)
      problems.push_back(std::string(stage) + " checkpoint hash " + actual + " differs from the " +
                         (recorded.empty() ? "missing" : recorded) + " recorded by the LDM");
  };
  expect("ae", ae_hash);
  if (!drm_hash.empty()) expect("drm", drm_hash);
  if (problems.empty()) return;
  std::string msg = "hash chain mismatch: ";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
  if (!allow_mismatch) throw HashMismatchError(msg + " (pass --allow-hash-mismatch to override)");
  say(opts, "warning: " + msg);
}

struct LoadedModels {
  std::optional<latent::AutoencoderModel> ae;
  std::optional<drm::DRModel> drm;
  std::optional<ldm::DiffusionModel> ldm;
  json hashes = json::object();
};

LoadedModels load_restoration_models(const RunConfig& cfg, bool allow_mismatch, const CommonOptions& opts) {
  require_checkpoint(cfg.checkpoints.ldm, "ldm");
  require_checkpoint(cfg.checkpoints.ae, "ae");
  LoadedModels m;
  const auto ldm_ck = Checkpoint::load(cfg.checkpoints.ldm);
  m.ldm.emplace(ldm::DiffusionModel::from_checkpoint(ldm_ck));
  m.ae.emplace(latent::AutoencoderModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.ae)));
  m.hashes["ldm"] = file_hash(cfg.checkpoints.ldm);
  m.hashes["ae"] = file_hash(cfg.checkpoints.ae);
  std::string drm_hash;
  if (m.ldm->use_dr) {
    require_checkpoint(cfg.checkpoints.drm, "drm");
    m.drm.emplace(drm::DRModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.drm)));
    drm_hash = file_hash(cfg.checkpoints.drm);
    m.hashes["drm"] = drm_hash;
  }
  check_hash_chain(ldm_ck, m.hashes["ae"], drm_hash, allow_mismatch, opts);
  return m;
}

eval::AblationRow summary_row(const std::string& variant, const std::string& metric,
                              const std::vector<double>& values, const std::string& hash) {
  double mean = 0.0, sq = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (double v : values) sq += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
  return {variant, metric, mean, sd, static_cast<int>(values.size()), hash};
}

}  // namespace

fs::path make_run_dir(const fs::path& parent, const std::string& stage, const std::string& config_hash) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream name;
  name << stage << "-" << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << "-" << config_hash;
  fs::create_directories(parent);
  auto dir = parent / name.str();
  for (int k = 2; fs::exists(dir); ++k) dir = parent / (name.str() + "-" + std::to_string(k));
  fs::create_directory(dir);
  return dir;
}

json init_config(const fs::path& path, const CommonOptions& opts) {
  if (path.empty()) throw UsageError("init-config needs an output path");
  if (fs::exists(path) && !opts.resume) throw IoError(path.string() + " already exists");
  RunConfig cfg;
  if (opts.seed) cfg.seed = *opts.seed;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  cfg.save(path);
  return {{"config", path.string()}, {"config_hash", cfg.hash()}};
}

json degrade(const RunConfig& base, const CommonOptions& opts) {
  const auto cfg = effective(base, opts);
  const fs::path root = opts.out.empty() ? corpus_root(cfg) : opts.out;
  json report{{"root", root.string()}, {"config_hash", cfg.hash()}, {"splits", json::object()}};
  const std::array<std::tuple<std::string, int, std::uint64_t>, 2> splits{
      {{"train", cfg.data.n_train, cfg.seed}, {"test", cfg.data.n_test, cfg.seed + 1}}};
  for (const auto& [split, n, seed] : splits) {
    auto manifest = build_manifest(cfg.manifest_spec(split, n, seed));
    manifest.validate();
    const int written = write_split(manifest, root / split, opts.resume, opts);
    report["splits"][split] = {{"n", n}, {"written", written},
                               {"manifest_hash", file_hash(root / split / "manifest.json")}};
  }
  return report;
}

json train_drm(const RunConfig& base, const CommonOptions& opts) {
  const auto cfg = effective(base, opts);
  const auto corpus = load_pair_corpus(corpus_root(cfg) / "train");
  say(opts, "drm: " + std::to_string(corpus.size()) + " training pairs");
  auto result = drm::train_drm(corpus, cfg.drm, cfg.data.patch_size, cfg.seed,
                               progress_logger(opts, "drm", cfg.drm.steps));
  const auto dir = make_run_dir(runs_parent(opts), "drm", cfg.hash());
  result.model.to_checkpoint(cfg.hash(), cfg.drm.steps).save(dir / "model.ckpt");
  nn::write_loss_csv(result.history, dir / "loss.csv");
  cfg.save(dir / "config.json");
  return train_summary("drm", dir, dir / "model.ckpt", cfg, result.history);
}

json train_ae(const RunConfig& base, const CommonOptions& opts) {
  const auto cfg = effective(base, opts);
  const auto corpus = load_pair_corpus(corpus_root(cfg) / "train");
  say(opts, "ae: " + std::to_string(corpus.size()) + " training images");
  auto result = latent::train_autoencoder(corpus.hq, cfg.latentae, cfg.seed,
                                          progress_logger(opts, "ae", cfg.latentae.steps));
  const auto dir = make_run_dir(runs_parent(opts), "ae", cfg.hash());
  result.model.to_checkpoint(cfg.hash(), cfg.latentae.steps).save(dir / "model.ckpt");
  nn::write_loss_csv(result.history, dir / "loss.csv");
  cfg.save(dir / "config.json");
  auto summary = train_summary("ae", dir, dir / "model.ckpt", cfg, result.history);
  summary["latent_scale"] = result.model.latent_scale;
  return summary;
}

json train_ldm(const RunConfig& base, const CommonOptions& opts) {
  const auto cfg = effective(base, opts);
  require_checkpoint(cfg.checkpoints.ae, "ae");
  if (cfg.ldrm.use_dr) require_checkpoint(cfg.checkpoints.drm, "drm");
  const auto ae = latent::AutoencoderModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.ae));
  std::optional<drm::DRModel> drm_model;
  json parents{{"ae", file_hash(cfg.checkpoints.ae)}, {"drm", nullptr}};
  if (cfg.ldrm.use_dr) {
    drm_model.emplace(drm::DRModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.drm)));
    parents["drm"] = file_hash(cfg.checkpoints.drm);
  }
  const auto corpus = load_pair_corpus(corpus_root(cfg) / "train");
  say(opts, "ldm: " + std::to_string(corpus.size()) + " training pairs");
  auto result = ldm::train_ldm(corpus, ae, drm_model ? &*drm_model : nullptr, cfg.ldrm, cfg.seed,
                               progress_logger(opts, "ldm", cfg.ldrm.steps), {cfg.drm.d, cfg.drm.l});
  const auto dir = make_run_dir(runs_parent(opts), "ldm", cfg.hash());
  result.model.to_checkpoint(cfg.hash(), cfg.ldrm.steps, parents).save(dir / "model.ckpt");
  nn::write_loss_csv(result.history, dir / "loss.csv");
  cfg.save(dir / "config.json");
  auto summary = train_summary("ldm", dir, dir / "model.ckpt", cfg, result.history);
  summary["parents"] = parents;
  return summary;
}

json restore(const RunConfig& base, const RestoreOptions& ropts, const CommonOptions& opts) {
  const auto cfg = effective(base, opts);
  if (ropts.input.empty() || ropts.output.empty()) throw UsageError("restore needs an input and an output path");
  if (!fs::exists(ropts.input)) throw IoError("input not found: " + ropts.input.string());
  const std::vector<fs::path> inputs =
      fs::is_directory(ropts.input) ? list_image_files(ropts.input) : std::vector<fs::path>{ropts.input};
  auto models = load_restoration_models(cfg, ropts.allow_hash_mismatch, opts);
  ldm::RestorationModels rm{&*models.ae, models.drm ? &*models.drm : nullptr, &*models.ldm};
  const auto sampler = ldm::parse_sampler(cfg.ldrm.sampler);
  fs::create_directories(ropts.output);
  json images = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto lq = load_image(inputs[i]);
    const std::uint64_t seed = cfg.seed + i;
    const auto out = ldm::restore(rm, lq, sampler, cfg.ldrm.sample_steps, seed);
    const auto target = ropts.output / (inputs[i].stem().string() + ".png");
    save_png(out, target);
    images.push_back({{"input", inputs[i].string()}, {"output", target.string()}, {"seed", seed}});
    say(opts, "restored " + inputs[i].string());
  }
  json report{{"config_hash", cfg.hash()},
              {"sampler", cfg.ldrm.sampler},
              {"sample_steps", cfg.ldrm.sample_steps},
              {"checkpoints", {{"ae", cfg.checkpoints.ae}, {"drm", cfg.checkpoints.drm}, {"ldm", cfg.checkpoints.ldm}}},
              {"checkpoint_hashes", models.hashes},
              {"images", images}};
  write_text(ropts.output / "report.json", report.dump(2) + "\n");
  return report;
}

json evaluate(const RunConfig& base, const std::string& kind, const CommonOptions& opts) {
  if (kind != "dr-recon" && kind != "dr-separability" && kind != "restore-metrics" && kind != "ablation")
    throw UsageError("unknown eval kind '" + kind + "' (dr-recon | dr-separability | restore-metrics | ablation)");
  const auto cfg = effective(base, opts);
  const auto test_root = corpus_root(cfg) / "test";
  json report{{"kind", kind}, {"config_hash", cfg.hash()}};

  if (kind == "dr-recon" || kind == "dr-separability") {
    require_checkpoint(cfg.checkpoints.drm, "drm");
    const auto model = drm::DRModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.drm));
    const auto corpus = load_pair_corpus(test_root);
    const auto dir = make_run_dir(runs_parent(opts), "eval-" + kind, cfg.hash());
    cfg.save(dir / "config.json");
    report["run_dir"] = dir.string();
    report["checkpoint_hash"] = file_hash(cfg.checkpoints.drm);
    if (kind == "dr-recon") {
      const auto r = eval::dr_recon(model, corpus, cfg.eval.n_eval, cfg.seed);
      std::ofstream out(dir / "dr_recon.csv");
      out << std::setprecision(10) << "metric,value\n"
          << "baseline_psnr," << r.baseline_psnr << "\nrecon_psnr," << r.recon_psnr << "\nswap_psnr,"
          << r.swap_psnr << "\nn," << r.n << "\n";
      report["baseline_psnr"] = r.baseline_psnr;
      report["recon_psnr"] = r.recon_psnr;
      report["swap_psnr"] = r.swap_psnr;
      report["n"] = r.n;
    } else {
      const auto r = eval::separability(model, corpus, true);
      std::ofstream out(dir / "separability.csv");
      out << std::setprecision(10) << "labeling,silhouette\n";
      for (const auto& [name, value] : r.silhouette) {
        out << name << "," << value << "\n";
        report["silhouette"][name] = value;
      }
      std::ofstream emb(dir / "embedding.csv");
      emb << std::setprecision(10) << "index,class_label,content_id,x,y\n";
      for (std::size_t i = 0; i < r.embedding_2d.size(); ++i)
        emb << i << "," << corpus.class_labels[i] << "," << corpus.content_ids[i] << "," << r.embedding_2d[i][0]
            << "," << r.embedding_2d[i][1] << "\n";
    }
    return report;
  }

  if (kind == "restore-metrics") {
    auto models = load_restoration_models(cfg, false, opts);
    ldm::RestorationModels rm{&*models.ae, models.drm ? &*models.drm : nullptr, &*models.ldm};
    const auto corpus = load_pair_corpus(test_root);
    const auto restored = eval::restore_metrics(rm, corpus, cfg.eval.n_eval, ldm::parse_sampler(cfg.ldrm.sampler),
                                                cfg.ldrm.sample_steps, cfg.seed, cfg.eval.ssim_window);
    const auto input = eval::lq_metrics(corpus, cfg.eval.n_eval, cfg.eval.ssim_window);
    const auto dir = make_run_dir(runs_parent(opts), "eval-" + kind, cfg.hash());
    cfg.save(dir / "config.json");
    const std::string hash = models.hashes["ldm"];
    std::vector<eval::AblationRow> rows;
    for (const auto& metric : cfg.eval.metrics) {
      const bool is_psnr = metric == "psnr";
      rows.push_back(summary_row("restored", metric, is_psnr ? restored.psnr : restored.ssim, hash));
      rows.push_back(summary_row("lq-input", metric, is_psnr ? input.psnr : input.ssim, ""));
    }
    eval::write_ablation_csv(rows, dir / "metrics.csv");
    std::ofstream per(dir / "per_image.csv");
    per << std::setprecision(10) << "index,psnr,ssim,lq_psnr,lq_ssim\n";
    for (std::size_t i = 0; i < restored.psnr.size(); ++i)
      per << i << "," << restored.psnr[i] << "," << restored.ssim[i] << "," << input.psnr[i] << "," << input.ssim[i]
          << "\n";
    report["run_dir"] = dir.string();
    report["mean_psnr"] = restored.mean_psnr;
    report["mean_ssim"] = restored.mean_ssim;
    report["lq_mean_psnr"] = input.mean_psnr;
    report["lq_mean_ssim"] = input.mean_ssim;
    report["checkpoint_hashes"] = models.hashes;
    return report;
  }

  // ablation
  require_checkpoint(cfg.checkpoints.ae, "ae");
  const auto ae = latent::AutoencoderModel::from_checkpoint(Checkpoint::load(cfg.checkpoints.ae));
  const auto train = load_pair_corpus(corpus_root(cfg) / "train");
  const auto test = load_pair_corpus(test_root);
  const auto dir = make_run_dir(runs_parent(opts), "eval-ablation", cfg.hash());
  cfg.save(dir / "config.json");
  eval::AblationOptions ao;
  ao.variants = cfg.eval.ablation_variants;
  ao.metrics = cfg.eval.metrics;
  ao.drm_steps = cfg.eval.ablation_drm_steps;
  ao.ldm_steps = cfg.eval.ablation_ldm_steps;
  ao.budget = cfg.eval.ablation_budget;
  ao.n_eval = cfg.eval.n_eval;
  ao.ssim_window = cfg.eval.ssim_window;
  ao.sampler = ldm::parse_sampler(cfg.ldrm.sampler);
  ao.sample_steps = cfg.ldrm.sample_steps;
  ao.seed = cfg.seed;
  ao.parallel = cfg.eval.ablation_parallel;
  ao.work_dir = dir / "checkpoints";
  ao.corpus_id = file_hash(corpus_root(cfg) / "train" / "manifest.json");
  ao.log = opts.log;
  const auto rows = eval::run_ablation(cfg, train, test, ae, file_hash(cfg.checkpoints.ae), ao);
  eval::write_ablation_csv(rows, dir / "ablation.csv");
  report["run_dir"] = dir.string();
  report["csv"] = (dir / "ablation.csv").string();
  report["rows"] = json::array();
  for (const auto& r : rows)
    report["rows"].push_back({{"variant", r.variant}, {"metric", r.metric}, {"mean", r.mean}, {"std", r.std},
                              {"n", r.n}, {"checkpoint_hash", r.checkpoint_hash}});
  return report;
}

}  // namespace drbfr::cmd
