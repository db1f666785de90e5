#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "facemat/distill/checkpoint.hpp"
#include "facemat/synth/dataset.hpp"

namespace facemat::testing {

/// Small synthetic dataset written under `dir`; returns the manifest path.
inline std::filesystem::path make_dataset(const std::filesystem::path& dir, int n, int size, int clip_length,
                                          std::uint64_t seed = 1, double test_fraction = 0.25) {
  synth::SynthConfig c;
  c.n = n;
  c.size = size;
  c.clip_length = clip_length;
  c.test_fraction = test_fraction;
  c.seed = seed;
  synth::synth_dataset(c, dir);
  return dir / "manifest.jsonl";
}

/// Freshly initialized network saved as a checkpoint.
inline std::filesystem::path save_fresh_model(const std::filesystem::path& path, const model::ModelConfig& cfg,
                                              std::uint64_t seed = 1) {
  distill::Checkpoint c;
  c.model = cfg;
  c.meta = R"({"stage":"teacher"})";
  distill::append_params(c, model::MattingNet(cfg, seed), distill::kParamPrefix);
  distill::save_checkpoint(path, c);
  return path;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace facemat::testing
