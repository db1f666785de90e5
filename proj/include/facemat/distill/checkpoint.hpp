#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "facemat/model/model.hpp"

namespace facemat::distill {

/// Bad magic, unsupported version, truncation or checksum failure. Nothing
/// is returned from a checkpoint that raises this.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kCheckpointVersion = 1;

/// On disk: "FMATCKPT", u32 version, u64 payload size, payload, u32 CRC-32
/// of the payload. All integers little-endian; tensors are raw float32.
struct Checkpoint {
  model::ModelConfig model;
  std::uint64_t step = 0;
  std::string rng_state;
  /// Free-form JSON describing the run that produced the checkpoint.
  std::string meta;
  std::vector<std::pair<std::string, nn::Tensor>> blobs;

  const nn::Tensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Blob prefixes.
inline constexpr const char* kParamPrefix = "param/";
inline constexpr const char* kTeacherPrefix = "teacher/";
inline constexpr const char* kAdamMPrefix = "adam.m/";
inline constexpr const char* kAdamVPrefix = "adam.v/";

void append_params(Checkpoint& c, const model::MattingNet& net, const std::string& prefix);
/// Copies blobs `prefix + name` into the network; every parameter must be
/// present with the same shape.
void restore_params(model::MattingNet& net, const Checkpoint& c, const std::string& prefix);

/// Network built from the checkpoint's config and `param/` blobs.
model::MattingNet load_model(const std::filesystem::path& path);
model::MattingNet model_from_checkpoint(const Checkpoint& c, const std::string& prefix = kParamPrefix);

/// FNV-1a of the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace facemat::distill
