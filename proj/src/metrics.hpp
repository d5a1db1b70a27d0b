// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "image.hpp"

namespace drbfr {

/// d tokens of dimension l, row-major.
struct DRFeature {
  int d = 0;
  int l = 0;
  std::vector<float> values;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const DRFeature&) const = default;
};

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) on the unit range, capped at 99 dB.
double psnr(const ImageTensor& a, const ImageTensor& b);

/// Mean SSIM over all valid `window` x `window` uniform windows of every channel,
/// C1 = 0.01^2, C2 = 0.03^2, population (co)variances.
double ssim(const ImageTensor& a, const ImageTensor& b, int window = 7);

/// Cosine of the flattened features, in [-1, 1].
double dr_cosine(const DRFeature& a, const DRFeature& b);

/// Mean silhouette with Euclidean distance. Singleton clusters score 0.
double silhouette_score(std::span<const std::vector<double>> points, std::span<const int> labels);

/// Projection onto the two leading principal components.
std::vector<std::array<double, 2>> pca_2d(std::span<const std::vector<double>> points);

std::vector<double> flatten(const DRFeature& f);

struct SeparabilityReport {
  std::vector<std::pair<std::string, double>> silhouette;  // one entry per labeling
  std::vector<std::array<double, 2>> embedding_2d;         // empty unless requested
};

/// Silhouette of the flattened features under each named labeling. Every
/// labeling needs at least two classes with at least two members each.
SeparabilityReport dr_separability(std::span<const DRFeature> features,
                                   const std::vector<std::pair<std::string, std::vector<int>>>& labelings,
                                   bool embed = false);

}  // namespace drbfr
