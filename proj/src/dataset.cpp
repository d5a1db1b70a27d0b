// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "manifest.hpp"

namespace drbfr {

namespace {

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

// Fraction of the pixel covered by a shape given its signed distance in pixels.
float coverage(double signed_distance) {
  return static_cast<float>(std::clamp(0.5 - signed_distance / 1.2, 0.0, 1.0));
}

double ellipse_distance(double x, double y, double cx, double cy, double a, double b) {
  const double k = std::hypot((x - cx) / a, (y - cy) / b);
  return (k - 1.0) * std::min(a, b);
}

void blend(ImageTensor& img, int y, int x, float cov, Rgb c) {
  if (cov <= 0.0f) return;
  img.at(y, x, 0) += cov * (c.r - img.at(y, x, 0));
  img.at(y, x, 1) += cov * (c.g - img.at(y, x, 1));
  img.at(y, x, 2) += cov * (c.b - img.at(y, x, 2));
}

}  // namespace

ImageTensor generate_toy_face(std::uint64_t seed, int size) {
  if (size < 32) throw ArgumentError("generate_toy_face: size must be >= 32");
  std::mt19937_64 rng(seed);
  const auto uni = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double s = size;

  const Rgb bg_top = hsv_to_rgb(uni(0, 1), uni(0.15, 0.6), uni(0.3, 0.95));
  const Rgb bg_bottom = hsv_to_rgb(uni(0, 1), uni(0.15, 0.6), uni(0.3, 0.95));
  const Rgb skin = hsv_to_rgb(uni(0.02, 0.11), uni(0.25, 0.6), uni(0.45, 0.95));
  const Rgb hair = hsv_to_rgb(uni(0.0, 0.12), uni(0.3, 0.8), uni(0.08, 0.5));
  const Rgb iris = hsv_to_rgb(uni(0.0, 1.0), uni(0.3, 0.8), uni(0.1, 0.45));
  const Rgb lips = hsv_to_rgb(uni(0.95, 1.02), uni(0.4, 0.7), uni(0.4, 0.8));
  const Rgb sclera{0.93f, 0.93f, 0.9f};

  const double cx = s * (0.5 + uni(-0.05, 0.05));
  const double cy = s * (0.52 + uni(-0.04, 0.04));
  const double ha = s * uni(0.26, 0.34);
  const double hb = s * uni(0.34, 0.42);
  const double hair_drop = uni(0.05, 0.2);
  const double eye_dx = ha * uni(0.36, 0.46);
  const double eye_y = cy - hb * uni(0.12, 0.24);
  const double eye_r = s * uni(0.045, 0.065);
  const double mouth_y = cy + hb * uni(0.4, 0.55);
  const double mouth_w = ha * uni(0.3, 0.5);
  const double mouth_curve = s * uni(-0.02, 0.06);
  const double mouth_t = s * uni(0.012, 0.025);
  const double shade = uni(0.05, 0.2);

  ImageTensor img(size, size);
  for (int y = 0; y < size; ++y) {
    const double yy = y + 0.5;
    const float t = static_cast<float>(yy / s);
    const Rgb bg{bg_top.r + t * (bg_bottom.r - bg_top.r), bg_top.g + t * (bg_bottom.g - bg_top.g),
                 bg_top.b + t * (bg_bottom.b - bg_top.b)};
    for (int x = 0; x < size; ++x) {
      const double xx = x + 0.5;
      blend(img, y, x, 1.0f, bg);

      // Hair: a slightly larger ellipse behind the head, shifted up.
      blend(img, y, x, coverage(ellipse_distance(xx, yy, cx, cy - hb * hair_drop, ha * 1.08, hb * 1.02)), hair);

      const double head_sd = ellipse_distance(xx, yy, cx, cy, ha, hb);
      const double radial = std::clamp(std::hypot((xx - cx) / ha, (yy - cy) / hb), 0.0, 1.0);
      const float lit = static_cast<float>(1.0 - shade * radial * radial);
      blend(img, y, x, coverage(head_sd), Rgb{skin.r * lit, skin.g * lit, skin.b * lit});
      // Hairline over the upper part of the head.
      if (yy < cy - hb * 0.55)
        blend(img, y, x, coverage(std::max(head_sd, (yy - (cy - hb * 0.55)))), hair);

      for (const double side : {-1.0, 1.0}) {
        const double ex = cx + side * eye_dx;
        blend(img, y, x, coverage(ellipse_distance(xx, yy, ex, eye_y, eye_r * 1.6, eye_r)), sclera);
        blend(img, y, x, coverage(ellipse_distance(xx, yy, ex, eye_y, eye_r * 0.75, eye_r * 0.75)), iris);
      }

      const double u = (xx - cx) / mouth_w;
      if (std::fabs(u) <= 1.2) {
        const double arc_y = mouth_y + mouth_curve * (u * u - 0.5);
        const double along = std::fabs(u) - 1.0;
        const double sd = std::max(std::fabs(yy - arc_y) - mouth_t, along * mouth_w);
        blend(img, y, x, coverage(sd), lips);
      }
    }
  }
  img.clamp();
  return img;
}

PairedPatchSet random_patch_pair(const ImageTensor& hq, const ImageTensor& lq, int patch_size,
                                 std::mt19937_64& rng) {
  require_same_shape(hq, lq, "random_patch_pair");
  if (patch_size <= 0 || patch_size > std::min(hq.height(), hq.width()))
    throw ArgumentError("random_patch_pair: patch_size must lie in [1, min(H, W)]");
  std::uniform_int_distribution<int> rows(0, hq.height() - patch_size);
  std::uniform_int_distribution<int> cols(0, hq.width() - patch_size);
  PairedPatchSet set;
  for (int k = 0; k < 2; ++k) {
    const int row = rows(rng);
    const int col = cols(rng);
    set.positions[k] = {row, col};
    set.hq_patches[k] = hq.crop(row, col, patch_size, patch_size);
    set.lq_patches[k] = lq.crop(row, col, patch_size, patch_size);
  }
  return set;
}

PairCorpus load_pair_corpus(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw DataError("corpus has no manifest: " + manifest_path.string());
  const DatasetManifest manifest = read_manifest(manifest_path);
  PairCorpus corpus;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto name = std::to_string(i) + ".png";
    const auto hq_path = root / "hq" / name;
    const auto lq_path = root / "lq" / name;
    if (!std::filesystem::exists(hq_path) || !std::filesystem::exists(lq_path))
      throw DataError("corpus incomplete, missing pair " + name + " under " + root.string());
    corpus.hq.push_back(load_image(hq_path));
    corpus.lq.push_back(load_image(lq_path));
    require_same_shape(corpus.hq.back(), corpus.lq.back(), name.c_str());
    corpus.class_labels.push_back(manifest.entries[i].class_label);
    corpus.content_ids.push_back(manifest.entries[i].content_id);
  }
  if (corpus.size() == 0) throw DataError("empty corpus: " + root.string());
  return corpus;
}

}  // namespace drbfr
