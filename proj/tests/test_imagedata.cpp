// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "dataset.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "test_util.hpp"

using namespace drbfr;
namespace fs = std::filesystem;

namespace {

ImageTensor decode_mat(const cv::Mat& m) {
  std::vector<std::uint8_t> bytes;
  REQUIRE(cv::imencode(".png", m, bytes));
  return decode_image(bytes, "test");
}

}  // namespace

TEST_CASE("load_image maps bytes to unit range") {
  const auto white = decode_mat(cv::Mat(4, 5, CV_8UC3, cv::Scalar(255, 255, 255)));
  CHECK(white.height() == 4);
  CHECK(white.width() == 5);
  CHECK(std::all_of(white.pixels().begin(), white.pixels().end(), [](float v) { return v == 1.0f; }));

  const auto black = decode_mat(cv::Mat(3, 3, CV_8UC3, cv::Scalar(0, 0, 0)));
  CHECK(std::all_of(black.pixels().begin(), black.pixels().end(), [](float v) { return v == 0.0f; }));

  const auto mid = decode_mat(cv::Mat(2, 2, CV_8UC3, cv::Scalar(128, 128, 128)));
  for (float v : mid.pixels()) CHECK(v == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("load_image channel handling") {
  cv::Mat gray(2, 2, CV_8UC1, cv::Scalar(51));
  const auto g = decode_mat(gray);
  for (int c = 0; c < 3; ++c) CHECK(g.at(1, 1, c) == doctest::Approx(0.2));

  // OpenCV stores BGR; red must land in channel 0.
  cv::Mat bgra(1, 1, CV_8UC4, cv::Scalar(0, 0, 255, 7));
  const auto rgb = decode_mat(bgra);
  CHECK(rgb.at(0, 0, 0) == 1.0f);
  CHECK(rgb.at(0, 0, 1) == 0.0f);
  CHECK(rgb.at(0, 0, 2) == 0.0f);
}

TEST_CASE("load_image errors") {
  cv::Mat deep(2, 2, CV_16UC3, cv::Scalar(1000, 1000, 1000));
  std::vector<std::uint8_t> bytes;
  REQUIRE(cv::imencode(".png", deep, bytes));
  CHECK_THROWS_AS(decode_image(bytes, "deep"), FormatError);

  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(decode_image(junk, "junk"), DecodeError);
  CHECK_THROWS_AS(load_image("/nonexistent/drbfr.png"), DecodeError);
  try {
    load_image("/nonexistent/drbfr.png");
  } catch (const DecodeError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/drbfr.png") != std::string::npos);
  }
}

TEST_CASE("PNG round trip changes pixels by at most one quantization step") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageTensor img(17, 9);
  for (auto& v : img.data()) v = u(rng);
  const auto back = decode_image(encode_png(img), "roundtrip");
  REQUIRE(back.size() == img.size());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.pixels()[i] - img.pixels()[i]) <= 1.0f / 255.0f);

  test::TempDir dir;
  save_png(img, dir.path() / "x.png");
  CHECK(load_image(dir.path() / "x.png") == back);
}

TEST_CASE("toy faces") {
  CHECK(generate_toy_face(7, 64) == generate_toy_face(7, 64));
  CHECK_THROWS_AS(generate_toy_face(1, 31), ArgumentError);

  const auto a = generate_toy_face(1, 64);
  const auto b = generate_toy_face(2, 64);
  std::size_t differing = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      bool diff = false;
      for (int c = 0; c < 3; ++c) diff |= a.at(y, x, c) != b.at(y, x, c);
      differing += diff ? 1 : 0;
    }
  CHECK(differing >= 64 * 64 / 100);

  double lo = 1.0, hi = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto img = generate_toy_face(s, 32);
    double mean = 0.0;
    for (float v : img.pixels()) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
      mean += v;
    }
    mean /= static_cast<double>(img.size());
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  CHECK(hi - lo >= 0.1);
}

TEST_CASE("random_patch_pair") {
  const auto hq = generate_toy_face(5, 64);
  auto lq = hq;
  for (auto& v : lq.data()) v = 1.0f - v;

  SUBCASE("full-image patch") {
    std::mt19937_64 rng(1);
    const auto p = random_patch_pair(hq, lq, 64, rng);
    CHECK(p.positions[0] == PatchPosition{0, 0});
    CHECK(p.positions[1] == PatchPosition{0, 0});
    CHECK(p.hq_patches[0] == hq);
    CHECK(p.hq_patches[1] == hq);
  }
  SUBCASE("identity degradation") {
    std::mt19937_64 rng(2);
    const auto p = random_patch_pair(hq, hq, 16, rng);
    CHECK(p.lq_patches[0] == p.hq_patches[0]);
    CHECK(p.lq_patches[1] == p.hq_patches[1]);
  }
  SUBCASE("alignment and determinism") {
    std::mt19937_64 r1(9), r2(9);
    bool any_distinct = false;
    for (int i = 0; i < 50; ++i) {
      const auto p = random_patch_pair(hq, lq, 32, r1);
      const auto q = random_patch_pair(hq, lq, 32, r2);
      for (int k = 0; k < 2; ++k) {
        CHECK(p.positions[k] == q.positions[k]);
        const auto& pos = p.positions[k];
        CHECK(p.hq_patches[k] == hq.crop(pos.row, pos.col, 32, 32));
        CHECK(p.lq_patches[k] == lq.crop(pos.row, pos.col, 32, 32));
      }
      any_distinct |= !(p.positions[0] == p.positions[1]);
    }
    CHECK(any_distinct);
  }
  SUBCASE("errors") {
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(random_patch_pair(hq, generate_toy_face(5, 32), 16, rng), ArgumentError);
    CHECK_THROWS_AS(random_patch_pair(hq, lq, 65, rng), ArgumentError);
  }
}

TEST_CASE("build_manifest") {
  ManifestSpec spec;
  spec.n = 200;
  spec.seed = 42;

  const auto m = build_manifest(spec);
  REQUIRE(m.entries.size() == 200);
  CHECK(m.format_version == 1);
  std::set<std::uint64_t> seeds;
  for (const auto& e : m.entries) {
    CHECK(e.params.sigma >= 0.1);
    CHECK(e.params.sigma <= 10.0);
    CHECK(e.params.r >= 0.8);
    CHECK(e.params.r <= 8.0);
    CHECK(e.params.delta >= 0.0);
    CHECK(e.params.delta <= 20.0);
    CHECK(e.params.q >= 60);
    CHECK(e.params.q <= 100);
    seeds.insert(e.seed);
  }
  CHECK(seeds.size() == 200);
  CHECK_NOTHROW(m.validate());

  spec.n = 1;
  CHECK(build_manifest(spec).entries.size() == 1);
  spec.n = 0;
  CHECK_THROWS_AS(build_manifest(spec), ArgumentError);

  spec.n = 25;
  CHECK(manifest_to_json(build_manifest(spec)) == manifest_to_json(build_manifest(spec)));
  CHECK(manifest_from_json(manifest_to_json(build_manifest(spec))) == build_manifest(spec));
  auto other = spec;
  other.seed = 43;
  CHECK(manifest_to_json(build_manifest(spec)) != manifest_to_json(build_manifest(other)));
}

TEST_CASE("build_manifest class structure") {
  ManifestSpec spec;
  spec.n = 30;
  spec.class_structured = true;
  spec.allow_override = true;
  spec.classes = {{"a", {{0.1, 1.0}, {1.0, 1.5}, {0.0, 3.0}, {85.0, 100.0}}},
                  {"b", {{0.1, 1.0}, {1.0, 1.5}, {12.0, 20.0}, {85.0, 100.0}}},
                  {"c", {{0.1, 1.0}, {1.0, 1.5}, {0.0, 3.0}, {10.0, 25.0}}}};
  const auto m = build_manifest(spec);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(m.entries[i].class_label == static_cast<int>(i % 3));
    CHECK(m.entries[i].content_id == static_cast<int>(i / 3));
    CHECK(spec.classes[i % 3].ranges.contains(m.entries[i].params));
  }
  // Same content, same HQ image across the classes.
  CHECK(materialize_hq(m.entries[0], 32) == materialize_hq(m.entries[2], 32));

  spec.allow_override = false;
  CHECK_THROWS(build_manifest(spec));
}

TEST_CASE("build_manifest from a directory") {
  test::TempDir dir;
  CHECK_THROWS_AS(build_manifest(ManifestSpec{dir.path().string(), "train", 32, 3}), DataError);
  save_png(generate_toy_face(1, 40), dir.path() / "a.png");
  save_png(generate_toy_face(2, 40), dir.path() / "b.png");
  std::ofstream(dir.path() / "notes.txt") << "ignored";
  const auto m = build_manifest(ManifestSpec{dir.path().string(), "train", 32, 3});
  REQUIRE(m.entries.size() == 3);
  const auto img = materialize_hq(m.entries[0], 32);
  CHECK(img.height() == 32);
  CHECK(img.width() == 32);
}

TEST_CASE("manifest validation") {
  auto m = build_manifest(ManifestSpec{});
  m.entries.push_back(m.entries.front());
  CHECK_THROWS_AS(m.validate(), FormatError);
  m.entries.pop_back();
  m.entries[0].params.sigma = 50.0;
  CHECK_THROWS_AS(m.validate(), FormatError);
  m = build_manifest(ManifestSpec{});
  m.format_version = 2;
  CHECK_THROWS_AS(m.validate(), FormatError);

  test::TempDir dir;
  CHECK_THROWS(read_manifest(dir.path() / "missing.json"));
  std::ofstream(dir.path() / "bad.json") << "{ not json";
  CHECK_THROWS_AS(read_manifest(dir.path() / "bad.json"), FormatError);
}
