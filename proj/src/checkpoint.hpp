// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace drbfr {

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t numel() const;
};

/// Named float32 tensors behind a JSON header:
///   "DRBFRCK1" | u64 header bytes | header JSON | little-endian payload.
/// The header carries the module kind, shapes, config hash, step counter, the
/// format version, and free-form metadata (latent scale, parent hashes, ...).
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string kind;  // "drm" | "ae" | "ldm"
  std::string config_hash;
  std::int64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  /// Validates magic, version, and that header shapes account for the payload exactly.
  static Checkpoint load(const std::filesystem::path& path);
  static nlohmann::json read_header(const std::filesystem::path& path);
};

}  // namespace drbfr
