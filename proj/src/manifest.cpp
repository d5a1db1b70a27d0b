// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dataset.hpp"
#include "errors.hpp"

namespace drbfr {

using nlohmann::json;

namespace {

constexpr const char* kToyPrefix = "toy:";

json range_json(const ParamRange& r) { return json::array({r.lo, r.hi}); }

ParamRange range_from(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 2) throw FormatError(std::string("manifest: bad range ") + name);
  return {j[0].get<double>(), j[1].get<double>()};
}

json ranges_json(const DegradationRanges& r) {
  return json{{"sigma", range_json(r.sigma)}, {"r", range_json(r.r)},
              {"delta", range_json(r.delta)}, {"q", range_json(r.q)}};
}

DegradationRanges ranges_from(const json& j) {
  DegradationRanges r;
  r.sigma = range_from(j.at("sigma"), "sigma");
  r.r = range_from(j.at("r"), "r");
  r.delta = range_from(j.at("delta"), "delta");
  r.q = range_from(j.at("q"), "q");
  return r;
}

}  // namespace

void DatasetManifest::validate() const {
  if (format_version != kFormatVersion)
    throw FormatError("manifest format_version " + std::to_string(format_version) +
                      " unsupported (expected " + std::to_string(kFormatVersion) + ")");
  if (classes.empty()) throw FormatError("manifest lists no degradation classes");
  for (const auto& c : classes) validate_ranges(c.ranges, allow_override);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!seeds.insert(e.seed).second) throw FormatError("manifest: duplicate seed at entry " + std::to_string(i));
    const int cls = e.class_label < 0 ? 0 : e.class_label;
    if (cls >= static_cast<int>(classes.size()))
      throw FormatError("manifest: class label out of range at entry " + std::to_string(i));
    if (!classes[cls].ranges.contains(e.params))
      throw FormatError("manifest: parameters outside configured ranges at entry " + std::to_string(i));
  }
}

DatasetManifest build_manifest(const ManifestSpec& spec) {
  if (spec.n < 1) throw ArgumentError("build_manifest: n must be >= 1");
  if (spec.classes.empty()) throw ArgumentError("build_manifest: no degradation classes");
  for (const auto& c : spec.classes) validate_ranges(c.ranges, spec.allow_override);

  std::vector<std::filesystem::path> files;
  if (spec.source != "toy") files = list_image_files(spec.source);

  DatasetManifest manifest;
  manifest.split = spec.split;
  manifest.image_size = spec.image_size;
  manifest.allow_override = spec.allow_override;
  manifest.class_structured = spec.class_structured && spec.classes.size() > 1;
  manifest.classes = spec.classes;

  std::mt19937_64 rng(spec.seed);
  const int k = manifest.class_structured ? static_cast<int>(spec.classes.size()) : 1;
  const int contents = (spec.n + k - 1) / k;
  std::vector<std::uint64_t> content_seeds(contents);
  for (auto& s : content_seeds) s = rng();

  std::set<std::uint64_t> used;
  for (int i = 0; i < spec.n; ++i) {
    ManifestEntry e;
    e.content_id = i / k;
    e.class_label = manifest.class_structured ? i % k : -1;
    e.params = sample_params(spec.classes[manifest.class_structured ? i % k : 0].ranges, rng);
    while (!used.insert(e.params.seed).second) e.params.seed = rng();
    e.seed = e.params.seed;
    if (files.empty())
      e.hq_path = kToyPrefix + std::to_string(content_seeds[e.content_id]);
    else
      e.hq_path = files[static_cast<std::size_t>(e.content_id) % files.size()].string();
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json classes = json::array();
  for (const auto& c : m.classes) classes.push_back({{"name", c.name}, {"ranges", ranges_json(c.ranges)}});
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"hq_path", e.hq_path},
                       {"seed", e.seed},
                       {"content_id", e.content_id},
                       {"class_label", e.class_label},
                       {"params",
                        {{"sigma", e.params.sigma}, {"r", e.params.r}, {"delta", e.params.delta},
                         {"q", e.params.q}, {"seed", e.params.seed}}}});
  }
  json doc{{"format_version", m.format_version}, {"split", m.split},
           {"image_size", m.image_size},         {"allow_override", m.allow_override},
           {"class_structured", m.class_structured}, {"classes", classes},
           {"entries", entries}};
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    DatasetManifest m;
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != DatasetManifest::kFormatVersion)
      throw FormatError("manifest format_version " + std::to_string(m.format_version) + " unsupported");
    m.split = doc.at("split").get<std::string>();
    m.image_size = doc.at("image_size").get<int>();
    m.allow_override = doc.at("allow_override").get<bool>();
    m.class_structured = doc.value("class_structured", false);
    for (const auto& c : doc.at("classes"))
      m.classes.push_back({c.at("name").get<std::string>(), ranges_from(c.at("ranges"))});
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.hq_path = j.at("hq_path").get<std::string>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.content_id = j.at("content_id").get<int>();
      e.class_label = j.at("class_label").get<int>();
      const auto& p = j.at("params");
      e.params.sigma = p.at("sigma").get<double>();
      e.params.r = p.at("r").get<double>();
      e.params.delta = p.at("delta").get<double>();
      e.params.q = p.at("q").get<int>();
      e.params.seed = p.at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
}

std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("image source is not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  if (files.empty()) throw DataError("image source directory is empty: " + dir.string());
  std::sort(files.begin(), files.end());
  return files;
}

ImageTensor materialize_hq(const ManifestEntry& entry, int image_size) {
  if (entry.hq_path.rfind(kToyPrefix, 0) == 0) {
    const auto seed = std::stoull(entry.hq_path.substr(std::string(kToyPrefix).size()));
    return generate_toy_face(seed, image_size);
  }
  ImageTensor img = load_image(entry.hq_path);
  if (img.height() != image_size || img.width() != image_size)
    img = resize_bicubic(img, image_size, image_size);
  img.clamp();
  return img;
}

}  // namespace drbfr
