// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace drbfr {

/// H x W x 3 image with interleaved RGB floats in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, float fill = 0.0f);
  ImageTensor(int height, int width, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  static constexpr int channels() noexcept { return 3; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(int y, int x, int c) { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  std::span<float> data() noexcept { return pixels_; }
  std::span<const float> data() const noexcept { return pixels_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }

  /// Clamps to [0, 1]; NaN becomes 0.
  void clamp();
  ImageTensor crop(int row, int col, int size_h, int size_w) const;

  bool operator==(const ImageTensor& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

/// Decodes an 8-bit PNG or JPEG. Grayscale is replicated to three channels and
/// alpha is dropped.
ImageTensor load_image(const std::filesystem::path& path);
ImageTensor decode_image(std::span<const std::uint8_t> bytes, const std::string& origin);

/// Writes an 8-bit PNG with round-to-nearest quantization.
void save_png(const ImageTensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

}  // namespace drbfr
