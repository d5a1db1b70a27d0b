// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include "image.hpp"

namespace drbfr {

/// Procedural face-like image: elliptical head, hair cap, two eyes, a mouth arc,
/// random skin/background colors and positional jitter. Pure function of seed.
ImageTensor generate_toy_face(std::uint64_t seed, int size);

struct PatchPosition {
  int row = 0;
  int col = 0;
  bool operator==(const PatchPosition&) const = default;
};

/// Two HQ crops and the LQ crops at the same two positions.
struct PairedPatchSet {
  std::array<ImageTensor, 2> hq_patches;
  std::array<ImageTensor, 2> lq_patches;
  std::array<PatchPosition, 2> positions;
};

PairedPatchSet random_patch_pair(const ImageTensor& hq, const ImageTensor& lq, int patch_size,
                                 std::mt19937_64& rng);

/// An in-memory LQ/HQ corpus as written by the degrade command.
struct PairCorpus {
  std::vector<ImageTensor> hq;
  std::vector<ImageTensor> lq;
  std::vector<int> class_labels;   // -1 when the corpus was sampled from one range set
  std::vector<int> content_ids;
  std::size_t size() const noexcept { return hq.size(); }
};

/// Reads `<root>/manifest.json` and the `<root>/{hq,lq}/<index>.png` tree.
PairCorpus load_pair_corpus(const std::filesystem::path& root);

}  // namespace drbfr
