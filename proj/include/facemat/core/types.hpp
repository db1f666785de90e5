#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facemat/core/grid.hpp"

namespace facemat {

/// Planar RGB raster with values in [0,1].
class ImageFrame {
 public:
  static constexpr int kChannels = 3;

  ImageFrame() = default;
  ImageFrame(int height, int width, double fill = 0.0)
      : planes_{Field(height, width, fill), Field(height, width, fill), Field(height, width, fill)} {}

  int height() const noexcept { return planes_[0].height(); }
  int width() const noexcept { return planes_[0].width(); }

  double& operator()(int c, int y, int x) noexcept { return planes_[c](y, x); }
  double operator()(int c, int y, int x) const noexcept { return planes_[c](y, x); }

  Field& plane(int c) noexcept { return planes_[c]; }
  const Field& plane(int c) const noexcept { return planes_[c]; }

  template <class U>
  bool same_shape(const Grid<U>& g) const noexcept {
    return planes_[0].same_shape(g);
  }
  bool same_shape(const ImageFrame& o) const noexcept { return planes_[0].same_shape(o.planes_[0]); }

  bool operator==(const ImageFrame&) const = default;

 private:
  std::array<Field, kChannels> planes_;
};

inline void require_same_shape(const ImageFrame& a, const ImageFrame& b, const char* what) {
  require_same_shape(a.plane(0), b.plane(0), what);
}
template <class U>
void require_same_shape(const ImageFrame& a, const Grid<U>& b, const char* what) {
  require_same_shape(a.plane(0), b, what);
}

enum class TrimapLabel : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

using Trimap = Grid<TrimapLabel>;

/// Serialized trimap byte values.
constexpr std::uint8_t kTrimapBgByte = 0;
constexpr std::uint8_t kTrimapUnknownByte = 128;
constexpr std::uint8_t kTrimapFgByte = 255;

Grid<std::uint8_t> encode_trimap(const Trimap& t);
/// Throws InvalidInput on any byte outside {0,128,255}.
Trimap decode_trimap(const Grid<std::uint8_t>& bytes);

Mask unknown_mask(const Trimap& t);

enum class OcclusionSource : std::uint8_t { Matte, HardMask, RandomShape, Texture, None };

std::string_view to_string(OcclusionSource s);
std::optional<OcclusionSource> parse_occlusion_source(std::string_view s);

struct OcclusionAsset {
  ImageFrame color;
  AlphaMatte alpha;
  OcclusionSource source = OcclusionSource::RandomShape;
};

struct ClipMeta {
  OcclusionSource source = OcclusionSource::None;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

/// One synthetic motion clip; all three sequences share length and size.
struct ClipSample {
  std::vector<ImageFrame> frames;
  std::vector<AlphaMatte> alphas;
  std::vector<Trimap> trimaps;
  ClipMeta meta;

  std::size_t length() const noexcept { return frames.size(); }
};

enum class ViolationKind { Range, NonFinite, SizeMismatch, LengthMismatch, TooSmall, Empty, Label };

struct Violation {
  ViolationKind kind;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

constexpr int kMinRasterSide = 8;

/// Lists every violated invariant of `s`; empty means valid.
ValidationReport validate_sample(const ClipSample& s);

/// Range/finiteness checks shared by the validators.
void check_image(const ImageFrame& f, std::string_view where, ValidationReport& out);
void check_unit_field(const Field& a, std::string_view where, ValidationReport& out);

}  // namespace facemat
