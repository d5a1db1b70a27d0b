// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "config.hpp"

namespace drbfr::cmd {

using LogFn = std::function<void(const std::string&)>;

struct CommonOptions {
  std::optional<std::uint64_t> seed;  // overrides config.seed
  bool resume = false;
  std::filesystem::path out;          // empty: command default
  LogFn log;
};

/// Writes the full default config.
nlohmann::json init_config(const std::filesystem::path& path, const CommonOptions& opts);

/// Builds train/test manifests and writes `<root>/<split>/{manifest.json, hq/, lq/, params/}`.
/// Root is `opts.out` when set, else `data.root`.
nlohmann::json degrade(const RunConfig& cfg, const CommonOptions& opts);

/// Each writes `<out>/<stage>-<timestamp>-<confighash>/{model.ckpt, loss.csv, config.json}`.
nlohmann::json train_drm(const RunConfig& cfg, const CommonOptions& opts);
nlohmann::json train_ae(const RunConfig& cfg, const CommonOptions& opts);
nlohmann::json train_ldm(const RunConfig& cfg, const CommonOptions& opts);

struct RestoreOptions {
  std::filesystem::path input;   // one image or a directory of images
  std::filesystem::path output;  // directory for restored PNGs and report.json
  bool allow_hash_mismatch = false;
};
nlohmann::json restore(const RunConfig& cfg, const RestoreOptions& ropts, const CommonOptions& opts);

/// kind: dr-recon | dr-separability | restore-metrics | ablation.
nlohmann::json evaluate(const RunConfig& cfg, const std::string& kind, const CommonOptions& opts);

/// `<parent>/<stage>-<UTC timestamp>-<hash>`, created fresh (suffixed when the name is taken).
std::filesystem::path make_run_dir(const std::filesystem::path& parent, const std::string& stage,
                                   const std::string& config_hash);

}  // namespace drbfr::cmd
