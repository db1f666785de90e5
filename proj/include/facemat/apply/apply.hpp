#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "facemat/core/types.hpp"
#include "facemat/model/model.hpp"

namespace facemat::apply {

enum class FilterKind { HueShift, Tint, ExternalFrames };

struct FilterSpec {
  FilterKind kind = FilterKind::HueShift;
  double hue_deg = 0.0;
  std::array<double, 3> tint{0.0, 0.0, 0.0};
  double opacity = 0.0;
  /// Directory of pre-rendered frames, one per input frame.
  std::filesystem::path external;

  /// Inverse of parse_filter.
  std::string to_string() const;
};

/// "hue:DEG", "tint:R,G,B,OPACITY" (components in [0,1]) or "external:DIR".
FilterSpec parse_filter(std::string_view text);

/// PNG files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Recurrent inference over the clip in order; frames of any size are
/// reflect-padded and the mattes cropped back. Values lie in [0,1].
std::vector<AlphaMatte> predict_matte(std::span<const ImageFrame> frames, const model::MattingNet& net,
                                      model::Padding* applied = nullptr);

/// Rotates hue in HSV space; multiples of 360 return the input unchanged.
ImageFrame hue_shift(const ImageFrame& f, double degrees);
/// (1 − opacity)·f + opacity·color.
ImageFrame tint(const ImageFrame& f, const std::array<double, 3>& color, double opacity);

std::vector<ImageFrame> transform_face(std::span<const ImageFrame> frames, const FilterSpec& spec);

/// out = α·transformed + (1 − α)·original per pixel.
std::vector<ImageFrame> composite_filter(std::span<const ImageFrame> original, std::span<const ImageFrame> transformed,
                                         std::span<const AlphaMatte> alphas);

/// Fills occluded face regions before transformation. The default leaves
/// frames untouched.
using CompletionFn = std::function<std::vector<ImageFrame>(std::vector<ImageFrame>, std::span<const AlphaMatte>)>;

/// Failure inside one pipeline stage; what() starts with "[stage]".
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& msg)
      : std::runtime_error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  int frames = 0;
  model::Padding padding;
  std::string checkpoint_hash;
  std::vector<std::string> notices;
};

inline constexpr const char* kFramesDir = "frames";
inline constexpr const char* kMattesDir = "mattes";
inline constexpr const char* kMetadataFile = "metadata.json";

/// matting → completion → transformation → compositing. Writes
/// out_dir/frames/<name>.png, out_dir/mattes/<name>.png and
/// out_dir/metadata.json.
PipelineResult run_pipeline(const std::filesystem::path& frames_dir, const std::filesystem::path& checkpoint,
                            const FilterSpec& spec, const std::filesystem::path& out_dir,
                            const CompletionFn& completion = {});

}  // namespace facemat::apply
