// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "errors.hpp"

namespace drbfr {

ImageTensor::ImageTensor(int height, int width, float fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw ArgumentError("image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height <= 0 || width <= 0) throw ArgumentError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * 3)
    throw ArgumentError("pixel buffer does not match " + std::to_string(height) + "x" +
                        std::to_string(width) + "x3");
}

void ImageTensor::clamp() {
  for (float& v : pixels_) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
}

ImageTensor ImageTensor::crop(int row, int col, int size_h, int size_w) const {
  if (row < 0 || col < 0 || size_h <= 0 || size_w <= 0 || row + size_h > height_ ||
      col + size_w > width_)
    throw ArgumentError("crop window out of bounds");
  ImageTensor out(size_h, size_w);
  for (int y = 0; y < size_h; ++y) {
    const float* src = &pixels_[(static_cast<std::size_t>(row + y) * width_ + col) * 3];
    std::copy(src, src + static_cast<std::size_t>(size_w) * 3, &out.at(y, 0, 0));
  }
  return out;
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ArgumentError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                        "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                        "x" + std::to_string(b.width()));
}

namespace {

ImageTensor from_mat(const cv::Mat& decoded, const std::string& origin) {
  if (decoded.empty()) throw DecodeError("cannot decode image: " + origin);
  if (decoded.depth() != CV_8U)
    throw FormatError("unsupported bit depth (expected 8-bit): " + origin);
  cv::Mat rgb;
  switch (decoded.channels()) {
    case 1: cv::cvtColor(decoded, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(decoded, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw FormatError("unsupported channel count: " + origin);
  }
  ImageTensor out(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    for (int i = 0; i < rgb.cols * 3; ++i) out.data()[static_cast<std::size_t>(y) * rgb.cols * 3 + i] = row[i] / 255.0f;
  }
  return out;
}

cv::Mat to_bgr8(const ImageTensor& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = rgb.ptr<std::uint8_t>(y);
    for (int i = 0; i < image.width() * 3; ++i) {
      float v = image.data()[static_cast<std::size_t>(y) * image.width() * 3 + i];
      v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
      row[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

ImageTensor decode_image(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.empty()) throw DecodeError("empty image data: " + origin);
  cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                 const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(buffer, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    throw DecodeError("cannot decode image: " + origin);
  }
  return from_mat(decoded, origin);
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot read image file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image(bytes, path.string());
}

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_bgr8(image), out)) throw IoError("PNG encoding failed");
  return out;
}

void save_png(const ImageTensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace drbfr
