#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facemat/core/types.hpp"

namespace facemat {

enum class Split { Train, Test };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

/// One clip on disk. Paths are relative to the manifest's directory.
struct ManifestRecord {
  std::string sample_id;
  /// Identity shared by every schedule stage of the same sample.
  std::string base_id;
  Split split = Split::Train;
  OcclusionSource source = OcclusionSource::None;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  /// Occlusion-ratio schedule stage and the epoch at which it becomes active.
  int stage = 0;
  int epoch_start = 0;
  std::vector<std::string> frames;
  std::vector<std::string> alphas;
  std::vector<std::string> trimaps;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  /// Directory that record paths resolve against.
  std::filesystem::path root;
};

/// Line-delimited JSON, one record per line, UTF-8.
std::string manifest_line(const ManifestRecord& r);
ManifestRecord parse_manifest_line(const std::string& line);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
/// Missing keys and malformed lines throw InvalidInput naming the line number.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Duplicate sample ids, missing files, sequence length mismatches. The
/// result is sorted, so it does not depend on record order.
std::vector<std::string> validate_manifest(const DatasetManifest& m);

std::vector<const ManifestRecord*> select_split(const DatasetManifest& m, Split split);

/// Loads a record into memory. Trimaps are only read when `with_trimaps`.
ClipSample load_clip(const DatasetManifest& m, const ManifestRecord& r, bool with_trimaps = true);

}  // namespace facemat
