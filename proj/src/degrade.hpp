// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "image.hpp"

namespace drbfr {

/// One draw of the blur / downsample / noise / JPEG chain.
struct DegradationParams {
  double sigma = 0.1;   // Gaussian blur std, pixels
  double r = 1.0;       // resize factor; the image is scaled by 1/r
  double delta = 0.0;   // noise std on the 0..255 scale
  int q = 100;          // JPEG quality
  std::uint64_t seed = 0;

  bool operator==(const DegradationParams&) const = default;
};

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  bool operator==(const ParamRange&) const = default;
};

struct DegradationRanges {
  ParamRange sigma{0.1, 10.0};
  ParamRange r{0.8, 8.0};
  ParamRange delta{0.0, 20.0};
  ParamRange q{60.0, 100.0};

  bool contains(const DegradationParams& p) const noexcept;
  bool operator==(const DegradationRanges&) const = default;
};

/// Default sampling ranges for training-pair synthesis.
DegradationRanges standard_ranges();

/// Throws ArgumentError for malformed ranges (lo > hi, non-physical values), and
/// for ranges wider than the standard ones unless `allow_override` is set.
void validate_ranges(const DegradationRanges& ranges, bool allow_override);

struct BlurKernel {
  int size = 1;
  std::vector<double> weights;  // row-major size x size

  double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * size + col]; }
};

/// Discrete isotropic Gaussian of width 2*ceil(3*sigma)+1, capped at 41 and at
/// `max_size` (rounded down to odd), normalized to unit sum.
BlurKernel gaussian_kernel(double sigma, int max_size = 41);

/// Intermediate images of the pipeline, kept for inspection and tests.
struct DegradationTrace {
  ImageTensor blurred;
  ImageTensor resized;          // after the 1/r resize
  ImageTensor noisy_unclamped;  // resized + noise, before clamping
  ImageTensor jpeg;             // after the JPEG round trip (low resolution)
  ImageTensor output;           // back at the input resolution
};

/// blur (reflect border) -> bicubic resize by 1/r -> Gaussian noise delta/255 ->
/// clamp -> JPEG(q) -> bicubic resize back -> clamp.
ImageTensor apply_degradation(const ImageTensor& hq, const DegradationParams& params);
DegradationTrace apply_degradation_traced(const ImageTensor& hq, const DegradationParams& params);

/// JPEG encode/decode round trip at quality q on an 8-bit quantized copy.
ImageTensor jpeg_roundtrip(const ImageTensor& image, int quality);
ImageTensor resize_bicubic(const ImageTensor& image, int height, int width);
ImageTensor convolve_reflect(const ImageTensor& image, const BlurKernel& kernel);

/// sigma, r, delta uniform on their intervals; q uniform over the integers in
/// [ceil(q.lo), floor(q.hi)]; seed is a fresh 64-bit draw.
DegradationParams sample_params(const DegradationRanges& ranges, std::mt19937_64& rng);

}  // namespace drbfr
