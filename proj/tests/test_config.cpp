// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "test_util.hpp"

using namespace drbfr;

TEST_CASE("config defaults round trip") {
  const RunConfig def;
  CHECK_NOTHROW(def.validate());
  const auto back = RunConfig::from_json(def.to_json());
  CHECK(back.to_json() == def.to_json());
  CHECK(back.hash() == def.hash());
  CHECK(def.hash().size() == 16);

  test::TempDir dir;
  def.save(dir.path() / "c.json");
  CHECK(RunConfig::load(dir.path() / "c.json").hash() == def.hash());
}

TEST_CASE("config partial documents fill defaults") {
  const auto cfg = RunConfig::from_json(nlohmann::json{{"seed", 9}, {"drm", {{"tau", 0.2}}}});
  CHECK(cfg.seed == 9);
  CHECK(cfg.drm.tau == 0.2);
  CHECK(cfg.drm.d == RunConfig{}.drm.d);
  CHECK(cfg.hash() != RunConfig{}.hash());
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"drm", {{"lamda1", 1}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"drm", {{"d", "four"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"ldrm", {{"schedule", "quadratic"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"data", {{"patch_size", 48}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"degrade", {{"ranges", {{"sigma", {0.1, 40.0}}}}}}}),
                  ConfigError);
  CHECK_NOTHROW(RunConfig::from_json(
      nlohmann::json{{"degrade", {{"allow_override", true}, {"ranges", {{"sigma", {0.1, 40.0}}}}}}}));

  test::TempDir dir;
  std::ofstream(dir.path() / "bad.json") << "{";
  CHECK_THROWS_AS(RunConfig::load(dir.path() / "bad.json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(dir.path() / "none.json"), ConfigError);
}

TEST_CASE("sha256 helpers") {
  // SHA-256("abc") = ba7816bf8f01cfea...
  CHECK(short_sha256(std::string("abc")) == "ba7816bf8f01cfea");
  CHECK(short_sha256(std::string("")) == "e3b0c44298fc1c14");
  test::TempDir dir;
  std::ofstream(dir.path() / "f", std::ios::binary) << "abc";
  CHECK(file_hash(dir.path() / "f") == "ba7816bf8f01cfea");
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.kind = "drm";
  ck.config_hash = "0123456789ab";
  ck.step = 17;
  ck.meta = {{"d", 4}, {"note", "x"}};
  ck.tensors.push_back({"a.weight", {2, 3}, {1, 2, 3, 4, 5, 6}});
  ck.tensors.push_back({"a.bias", {2}, {-1.5f, 0.25f}});
  ck.tensors.push_back({"scalar", {}, {7.0f}});

  test::TempDir dir;
  const auto path = dir.path() / "m.ckpt";
  ck.save(path);
  const auto back = Checkpoint::load(path);
  CHECK(back.kind == "drm");
  CHECK(back.config_hash == ck.config_hash);
  CHECK(back.step == 17);
  CHECK(back.meta == ck.meta);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].name == ck.tensors[i].name);
    CHECK(back.tensors[i].shape == ck.tensors[i].shape);
    CHECK(back.tensors[i].values == ck.tensors[i].values);
  }
  CHECK(back.has("a.bias"));
  CHECK_FALSE(back.has("b"));
  CHECK_THROWS_AS(back.tensor("b"), FormatError);
  CHECK(Checkpoint::read_header(path).at("kind") == "drm");

  Checkpoint broken = ck;
  broken.tensors[0].values.pop_back();
  CHECK_THROWS_AS(broken.save(dir.path() / "x.ckpt"), ArgumentError);

  std::ofstream(dir.path() / "junk.ckpt", std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS(Checkpoint::load(dir.path() / "junk.ckpt"), FormatError);
  CHECK_THROWS_AS(Checkpoint::load(dir.path() / "missing.ckpt"), IoError);

  // Truncated payload.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir.path() / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  CHECK_THROWS_AS(Checkpoint::load(dir.path() / "short.ckpt"), FormatError);
}
