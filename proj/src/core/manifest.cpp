#include "facemat/core/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "facemat/core/raster_io.hpp"

namespace facemat {

using nlohmann::json;

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::string manifest_line(const ManifestRecord& r) {
  // nlohmann::json objects keep keys sorted, so each line is byte-stable.
  json j = json::object();
  j["sample_id"] = r.sample_id;
  j["base_id"] = r.base_id;
  j["split"] = std::string(to_string(r.split));
  j["source"] = std::string(to_string(r.source));
  j["seed"] = r.seed;
  j["ratio"] = r.ratio;
  j["stage"] = r.stage;
  j["epoch_start"] = r.epoch_start;
  j["frames"] = r.frames;
  j["alphas"] = r.alphas;
  j["trimaps"] = r.trimaps;
  return j.dump();
}

namespace {

ManifestRecord parse_record(const std::string& line) {
  const json j = json::parse(line);
  ManifestRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.base_id = j.value("base_id", r.sample_id);
  const auto split = parse_split(j.at("split").get<std::string>());
  if (!split) throw InvalidInput("unknown split '" + j.at("split").get<std::string>() + "'");
  r.split = *split;
  const auto src = parse_occlusion_source(j.value("source", std::string("none")));
  if (!src) throw InvalidInput("unknown occlusion source");
  r.source = *src;
  r.seed = j.value("seed", std::uint64_t{0});
  r.ratio = j.value("ratio", 0.0);
  r.stage = j.value("stage", 0);
  r.epoch_start = j.value("epoch_start", 0);
  r.frames = j.at("frames").get<std::vector<std::string>>();
  r.alphas = j.at("alphas").get<std::vector<std::string>>();
  r.trimaps = j.value("trimaps", std::vector<std::string>{});
  return r;
}

}  // namespace

ManifestRecord parse_manifest_line(const std::string& line) {
  try {
    return parse_record(line);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed manifest record: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  for (const auto& r : m.records) out << manifest_line(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(parse_manifest_line(line));
    } catch (const std::exception& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

std::vector<std::string> validate_manifest(const DatasetManifest& m) {
  std::vector<std::string> errors;
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (!seen.insert(r.sample_id).second) errors.push_back("duplicate sample_id " + r.sample_id);
    if (r.frames.empty()) errors.push_back(r.sample_id + ": no frames");
    if (r.alphas.size() != r.frames.size()) {
      errors.push_back(r.sample_id + ": frames/alphas length mismatch");
    }
    if (!r.trimaps.empty() && r.trimaps.size() != r.frames.size()) {
      errors.push_back(r.sample_id + ": frames/trimaps length mismatch");
    }
    for (const auto* list : {&r.frames, &r.alphas, &r.trimaps}) {
      for (const auto& p : *list) {
        if (!std::filesystem::exists(m.root / p)) errors.push_back(r.sample_id + ": missing file " + p);
      }
    }
  }
  std::sort(errors.begin(), errors.end());
  return errors;
}

std::vector<const ManifestRecord*> select_split(const DatasetManifest& m, Split split) {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : m.records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

ClipSample load_clip(const DatasetManifest& m, const ManifestRecord& r, bool with_trimaps) {
  ClipSample s;
  s.meta.source = r.source;
  s.meta.seed = r.seed;
  s.meta.ratio = r.ratio;
  for (const auto& p : r.frames) s.frames.push_back(load_image(m.root / p));
  for (const auto& p : r.alphas) s.alphas.push_back(load_matte(m.root / p));
  if (with_trimaps) {
    for (const auto& p : r.trimaps) s.trimaps.push_back(load_trimap(m.root / p));
  }
  return s;
}

}  // namespace facemat
