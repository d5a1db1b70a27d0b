// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "degrade.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "errors.hpp"

namespace drbfr {

namespace {

constexpr int kMinDegradedSide = 8;

cv::Mat to_mat(const ImageTensor& image) {
  cv::Mat m(image.height(), image.width(), CV_32FC3);
  std::copy(image.data().begin(), image.data().end(), m.ptr<float>(0));
  return m;
}

ImageTensor from_mat(const cv::Mat& m) {
  cv::Mat contiguous = m.isContinuous() ? m : m.clone();
  std::vector<float> pixels(contiguous.ptr<float>(0),
                            contiguous.ptr<float>(0) + static_cast<std::size_t>(m.rows) * m.cols * 3);
  return ImageTensor(m.rows, m.cols, std::move(pixels));
}

std::string fmt_range(const char* name, const ParamRange& r) {
  return std::string(name) + " in [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]";
}

}  // namespace

bool DegradationRanges::contains(const DegradationParams& p) const noexcept {
  return sigma.contains(p.sigma) && r.contains(p.r) && delta.contains(p.delta) &&
         q.contains(static_cast<double>(p.q));
}

DegradationRanges standard_ranges() { return DegradationRanges{}; }

void validate_ranges(const DegradationRanges& ranges, bool allow_override) {
  const auto check = [](const char* name, const ParamRange& r) {
    if (!(std::isfinite(r.lo) && std::isfinite(r.hi)) || r.lo > r.hi)
      throw ArgumentError(std::string("malformed range for ") + name);
  };
  check("sigma", ranges.sigma);
  check("r", ranges.r);
  check("delta", ranges.delta);
  check("q", ranges.q);
  if (ranges.sigma.lo <= 0.0) throw ArgumentError("sigma must be positive");
  if (ranges.r.lo <= 0.0) throw ArgumentError("r must be positive");
  if (ranges.delta.lo < 0.0) throw ArgumentError("delta must be non-negative");
  if (ranges.q.lo < 1.0 || ranges.q.hi > 100.0) throw ArgumentError("q must lie in [1, 100]");
  if (std::ceil(ranges.q.lo) > std::floor(ranges.q.hi)) throw ArgumentError("q range holds no integer");
  if (allow_override) return;
  const DegradationRanges standard = standard_ranges();
  const auto inside = [](const ParamRange& r, const ParamRange& limit) {
    return r.lo >= limit.lo && r.hi <= limit.hi;
  };
  if (!inside(ranges.sigma, standard.sigma))
    throw ArgumentError("range exceeds standard " + fmt_range("sigma", standard.sigma) +
                        " (set allow_override to widen)");
  if (!inside(ranges.r, standard.r))
    throw ArgumentError("range exceeds standard " + fmt_range("r", standard.r) +
                        " (set allow_override to widen)");
  if (!inside(ranges.delta, standard.delta))
    throw ArgumentError("range exceeds standard " + fmt_range("delta", standard.delta) +
                        " (set allow_override to widen)");
  if (!inside(ranges.q, standard.q))
    throw ArgumentError("range exceeds standard " + fmt_range("q", standard.q) +
                        " (set allow_override to widen)");
}

BlurKernel gaussian_kernel(double sigma, int max_size) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("gaussian_kernel: sigma must be > 0");
  if (max_size < 1) throw ArgumentError("gaussian_kernel: max_size must be >= 1");
  int size = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  size = std::min({size, 41, max_size});
  if (size % 2 == 0) --size;
  const int radius = size / 2;
  BlurKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i)
    for (int j = -radius; j <= radius; ++j) {
      const double w = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>(i + radius) * size + (j + radius)] = w;
      total += w;
    }
  for (double& w : k.weights) w /= total;
  return k;
}

ImageTensor convolve_reflect(const ImageTensor& image, const BlurKernel& kernel) {
  if (kernel.size / 2 >= std::min(image.height(), image.width()))
    throw ArgumentError("blur kernel larger than image");
  cv::Mat k(kernel.size, kernel.size, CV_32F);
  for (int i = 0; i < kernel.size; ++i)
    for (int j = 0; j < kernel.size; ++j) k.at<float>(i, j) = static_cast<float>(kernel.at(i, j));
  cv::Mat out;
  cv::filter2D(to_mat(image), out, CV_32F, k, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT_101);
  return from_mat(out);
}

ImageTensor resize_bicubic(const ImageTensor& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ArgumentError("resize target must be positive");
  if (height == image.height() && width == image.width()) return image;
  cv::Mat out;
  cv::resize(to_mat(image), out, cv::Size(width, height), 0.0, 0.0, cv::INTER_CUBIC);
  return from_mat(out);
}

ImageTensor jpeg_roundtrip(const ImageTensor& image, int quality) {
  if (quality < 1 || quality > 100) throw ArgumentError("JPEG quality must lie in [1, 100]");
  cv::Mat rgb8(image.height(), image.width(), CV_8UC3);
  for (std::size_t i = 0; i < image.size(); ++i)
    rgb8.ptr<std::uint8_t>(0)[i] =
        static_cast<std::uint8_t>(std::lround(std::clamp(image.data()[i], 0.0f, 1.0f) * 255.0f));
  cv::Mat bgr;
  cv::cvtColor(rgb8, bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> buffer;
  if (!cv::imencode(".jpg", bgr, buffer, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw DegradationError("JPEG encoding failed");
  return decode_image(buffer, "jpeg round trip");
}

DegradationTrace apply_degradation_traced(const ImageTensor& hq, const DegradationParams& params) {
  if (hq.empty()) throw ArgumentError("apply_degradation: empty image");
  if (!(params.r > 0.0) || !(params.delta >= 0.0) || params.q < 1 || params.q > 100)
    throw ArgumentError("apply_degradation: illegal parameters");
  const int h = hq.height();
  const int w = hq.width();
  const int low_h = static_cast<int>(std::lround(h / params.r));
  const int low_w = static_cast<int>(std::lround(w / params.r));
  if (low_h < kMinDegradedSide || low_w < kMinDegradedSide)
    throw DegradationError("resize factor r=" + std::to_string(params.r) + " leaves " +
                           std::to_string(low_h) + "x" + std::to_string(low_w) +
                           " pixels (minimum 8 per side)");

  DegradationTrace trace;
  trace.blurred = convolve_reflect(hq, gaussian_kernel(params.sigma, std::min(h, w)));
  trace.resized = resize_bicubic(trace.blurred, low_h, low_w);

  trace.noisy_unclamped = trace.resized;
  if (params.delta > 0.0) {
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> noise(0.0, params.delta / 255.0);
    for (float& v : trace.noisy_unclamped.data()) v = static_cast<float>(v + noise(rng));
  }
  ImageTensor clamped = trace.noisy_unclamped;
  clamped.clamp();
  trace.jpeg = jpeg_roundtrip(clamped, params.q);
  trace.output = resize_bicubic(trace.jpeg, h, w);
  trace.output.clamp();
  return trace;
}

ImageTensor apply_degradation(const ImageTensor& hq, const DegradationParams& params) {
  return apply_degradation_traced(hq, params).output;
}

DegradationParams sample_params(const DegradationRanges& ranges, std::mt19937_64& rng) {
  validate_ranges(ranges, /*allow_override=*/true);
  const auto uniform = [&rng](const ParamRange& r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  DegradationParams p;
  p.sigma = uniform(ranges.sigma);
  p.r = uniform(ranges.r);
  p.delta = uniform(ranges.delta);
  p.q = std::uniform_int_distribution<int>(static_cast<int>(std::ceil(ranges.q.lo)),
                                           static_cast<int>(std::floor(ranges.q.hi)))(rng);
  p.seed = rng();
  return p;
}

}  // namespace drbfr
