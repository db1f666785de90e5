#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "facemat/core/manifest.hpp"
#include "facemat/core/rng.hpp"
#include "facemat/core/types.hpp"
#include "facemat/synth/affine.hpp"
#include "facemat/synth/config.hpp"

namespace facemat::synth {

/// Configuration problems, reported all at once.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Raised when placement or animation cannot satisfy its constraints.
class Rejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Layer {
  ImageFrame color;
  AlphaMatte alpha;
};

/// Deterministic placement used for the test split.
struct FixedPlacement {
  double scale = 0.8;
  /// Asset centre as a fraction of the canvas.
  double cx = 0.5;
  double cy = 0.5;
};

/// Rescales, rotates, flips and colour-jitters `asset`, then pastes it on a
/// transparent canvas. Assets larger than the canvas are retried at smaller
/// scale; throws Rejected after bounded retries.
Layer place_occlusion(const OcclusionAsset& asset, int height, int width, Rng& rng, const SynthConfig& cfg,
                      const std::optional<FixedPlacement>& fixed = std::nullopt);

enum class MotionTarget { Face, Occluder };

/// Per-frame layers alongside the composited clip.
struct AnimatedClip {
  ClipSample sample;
  std::vector<ImageFrame> face_layers;
  std::vector<AlphaMatte> skin_layers;
  std::vector<ImageFrame> occ_color_layers;
  std::vector<AlphaMatte> occ_alpha_layers;
  std::vector<AffineTransform> transforms;
};

struct AnimateOptions {
  int length = 8;
  MotionTarget target = MotionTarget::Face;
  double pause_prob = 0.0;
  int erode_r = 5;
  int dilate_r = 5;
};

/// Animates the moving layer with interp_affine; frame t repeats frame t-1's
/// transform with probability pause_prob. Throws Rejected when the face is
/// pushed (mostly) off-canvas.
AnimatedClip animate_clip(const ImageFrame& face, const AlphaMatte& skin_mask, const ImageFrame& occ_color,
                          const AlphaMatte& occ_alpha, const AffineTransform& a0, const AffineTransform& a1,
                          const AnimateOptions& opt, Rng& rng);

/// Pair of random affine transforms about the canvas centre with magnitudes
/// scaled by cfg.motion_magnitude().
std::pair<AffineTransform, AffineTransform> sample_motion(Rng& rng, const SynthConfig& cfg, int size);

/// Asset pools per source, from disk (<dir>/<source>/{color,alpha}/<stem>.png)
/// or procedural.
class AssetPool {
 public:
  /// Throws ConfigError listing every enabled source without assets.
  AssetPool(const SynthConfig& cfg);
  OcclusionAsset draw(OcclusionSource source, Rng& rng, int canvas) const;
  std::size_t file_count(OcclusionSource source) const;

 private:
  std::map<OcclusionSource, std::vector<OcclusionAsset>> files_;
  bool builtin_ = true;
};

std::vector<OcclusionAsset> load_assets(const std::filesystem::path& dir, OcclusionSource source);

/// Number of occluded clips for a split of size n at `ratio`.
int occluded_count(int n, double ratio);

/// One sample, generated in memory. A pure function of (cfg, pool, base_id,
/// split, index, occluded).
AnimatedClip generate_sample(const SynthConfig& cfg, const AssetPool& pool, const std::string& base_id,
                             Split split, int index, bool occluded, OcclusionSource* source_out = nullptr);

struct SynthSummary {
  int train = 0;
  int test = 0;
  int occluded = 0;
  std::map<std::string, int> per_source;
};

/// Writes every clip and `manifest.jsonl` under out_dir and returns the
/// manifest. Output bytes depend only on cfg.
DatasetManifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir,
                              SynthSummary* summary = nullptr);

}  // namespace facemat::synth
