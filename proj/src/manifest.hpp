// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "degrade.hpp"

namespace drbfr {

struct DegradationClass {
  std::string name;
  DegradationRanges ranges;
  bool operator==(const DegradationClass&) const = default;
};

struct ManifestEntry {
  std::string hq_path;  // file path, or "toy:<seed>" for generated faces
  std::uint64_t seed = 0;
  DegradationParams params;
  int content_id = 0;
  int class_label = -1;  // index into DatasetManifest::classes when class-structured
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string split = "train";
  int image_size = 64;
  bool allow_override = false;
  bool class_structured = false;
  std::vector<DegradationClass> classes;
  std::vector<ManifestEntry> entries;

  /// Seeds unique, params inside their ranges, labels valid.
  void validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

struct ManifestSpec {
  std::string source = "toy";  // "toy" or a directory of PNG/JPEG files
  std::string split = "train";
  int image_size = 64;
  int n = 1;
  /// A single entry samples every image from one range set. With several
  /// entries and `class_structured`, image i uses content i / K and class i % K.
  std::vector<DegradationClass> classes{{"standard", standard_ranges()}};
  bool class_structured = false;
  bool allow_override = false;
  std::uint64_t seed = 0;
};

DatasetManifest build_manifest(const ManifestSpec& spec);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Sorted list of PNG/JPEG files in `dir`; throws DataError when none exist.
std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir);

/// Loads or renders the HQ image an entry refers to, at the manifest size.
ImageTensor materialize_hq(const ManifestEntry& entry, int image_size);

}  // namespace drbfr
