// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace drbfr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian hosts");

namespace {

constexpr char kMagic[8] = {'D', 'R', 'B', 'F', 'R', 'C', 'K', '1'};

struct RawFile {
  json header;
  std::vector<char> payload;
};

RawFile read_raw(const std::filesystem::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t header_len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + path.string());
  if (!in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len)) || header_len > (1u << 30))
    throw FormatError("corrupt checkpoint header: " + path.string());
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
    throw FormatError("truncated checkpoint header: " + path.string());
  RawFile raw;
  try {
    raw.header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint header is not JSON: " + path.string());
  }
  if (with_payload) raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

}  // namespace

std::int64_t NamedTensor::numel() const {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("checkpoint (" + kind + ") has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != t.numel())
      throw ArgumentError("tensor '" + t.name + "' payload does not match its shape");
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}});
    offset += t.values.size() * sizeof(float);
  }
  const json header{{"format_version", kFormatVersion}, {"kind", kind},     {"config_hash", config_hash},
                    {"step", step},                     {"meta", meta},     {"tensors", entries},
                    {"payload_bytes", offset}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors)
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

json Checkpoint::read_header(const std::filesystem::path& path) { return read_raw(path, false).header; }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  RawFile raw = read_raw(path, true);
  const json& h = raw.header;
  try {
    if (h.at("format_version").get<int>() != kFormatVersion)
      throw FormatError("unsupported checkpoint format_version in " + path.string());
    Checkpoint ck;
    ck.kind = h.at("kind").get<std::string>();
    ck.config_hash = h.at("config_hash").get<std::string>();
    ck.step = h.at("step").get<std::int64_t>();
    ck.meta = h.at("meta");
    std::uint64_t expected = 0;
    for (const auto& e : h.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      if (e.at("dtype").get<std::string>() != "f32") throw FormatError("unsupported dtype in " + path.string());
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (offset != expected) throw FormatError("non-contiguous tensor offsets in " + path.string());
      const auto bytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
      if (offset + bytes > raw.payload.size())
        throw FormatError("checkpoint payload shorter than header shapes: " + path.string());
      t.values.resize(static_cast<std::size_t>(t.numel()));
      std::memcpy(t.values.data(), raw.payload.data() + offset, bytes);
      expected = offset + bytes;
      ck.tensors.push_back(std::move(t));
    }
    if (expected != raw.payload.size())
      throw FormatError("checkpoint payload size does not match header shapes: " + path.string());
    return ck;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

}  // namespace drbfr
