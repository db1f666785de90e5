#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "facemat/core/types.hpp"

namespace facemat::synth {

/// One step of an occlusion-ratio schedule: `ratio` applies from `epoch` on.
struct RatioStep {
  int epoch = 0;
  double ratio = 0.25;
  bool operator==(const RatioStep&) const = default;
};

/// Parses "fixed" (empty schedule) or "epoch:ratio,epoch:ratio,...".
std::vector<RatioStep> parse_ratio_schedule(const std::string& text);
std::string format_ratio_schedule(const std::vector<RatioStep>& s);

struct SynthConfig {
  int size = 128;
  int n = 32;
  /// Fraction of the n clips assigned to split=test.
  double test_fraction = 0.0;
  double occlusion_ratio = 0.25;
  /// Empty means the fixed occlusion_ratio.
  std::vector<RatioStep> ratio_schedule;
  std::vector<OcclusionSource> sources{OcclusionSource::RandomShape, OcclusionSource::Texture,
                                       OcclusionSource::HardMask, OcclusionSource::Matte};
  std::filesystem::path asset_dir;
  /// Procedural assets stand in for any enabled source that has no files.
  bool builtin_assets = true;

  double scale_min = 0.6;
  double scale_max = 1.0;
  double rotation_deg = 30.0;
  double flip_prob = 0.5;
  double jitter_brightness = 0.15;
  double jitter_contrast = 0.15;
  double jitter_saturation = 0.15;
  double min_area = 0.05;
  double max_area = 0.5;

  double pause_prob = 0.1;
  int clip_length = 8;
  /// Motion magnitude multiplier: min(1, motion_rate * (T - 1)).
  double motion_rate = 0.25;
  double motion_translate = 0.06;  // fraction of canvas side
  double motion_rotate_deg = 8.0;
  double motion_scale = 0.06;

  int erode_r = 5;
  int dilate_r = 5;
  double blur_sigma = 2.0;

  std::uint64_t seed = 0;
  int workers = 1;
  /// Also write per-frame face/occluder layers next to each composite.
  bool write_layers = false;

  /// All violated constraints at once; empty when valid.
  std::vector<std::string> validate() const;
  double motion_magnitude() const;
};

}  // namespace facemat::synth
