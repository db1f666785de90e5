#include "facemat/core/types.hpp"

#include <cmath>
#include <sstream>

namespace facemat {

Grid<std::uint8_t> encode_trimap(const Trimap& t) {
  Grid<std::uint8_t> out(t.height(), t.width());
  for (std::size_t i = 0; i < t.size(); ++i) {
    switch (t[i]) {
      case TrimapLabel::Background: out[i] = kTrimapBgByte; break;
      case TrimapLabel::Unknown: out[i] = kTrimapUnknownByte; break;
      case TrimapLabel::Foreground: out[i] = kTrimapFgByte; break;
    }
  }
  return out;
}

Trimap decode_trimap(const Grid<std::uint8_t>& bytes) {
  Trimap out(bytes.height(), bytes.width());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    switch (bytes[i]) {
      case kTrimapBgByte: out[i] = TrimapLabel::Background; break;
      case kTrimapUnknownByte: out[i] = TrimapLabel::Unknown; break;
      case kTrimapFgByte: out[i] = TrimapLabel::Foreground; break;
      default:
        throw InvalidInput("decode_trimap: byte value " + std::to_string(bytes[i]) +
                           " is not one of {0,128,255}");
    }
  }
  return out;
}

Mask unknown_mask(const Trimap& t) {
  Mask m(t.height(), t.width(), 0);
  for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] == TrimapLabel::Unknown ? 1 : 0;
  return m;
}

std::string_view to_string(OcclusionSource s) {
  switch (s) {
    case OcclusionSource::Matte: return "matte";
    case OcclusionSource::HardMask: return "hard_mask";
    case OcclusionSource::RandomShape: return "random_shape";
    case OcclusionSource::Texture: return "texture";
    case OcclusionSource::None: return "none";
  }
  return "none";
}

std::optional<OcclusionSource> parse_occlusion_source(std::string_view s) {
  for (auto src : {OcclusionSource::Matte, OcclusionSource::HardMask, OcclusionSource::RandomShape,
                   OcclusionSource::Texture, OcclusionSource::None}) {
    if (to_string(src) == s) return src;
  }
  return std::nullopt;
}

void check_unit_field(const Field& a, std::string_view where, ValidationReport& out) {
  std::size_t nonfinite = 0, outside = 0;
  double worst = 0.0;
  for (double v : a.values()) {
    if (!std::isfinite(v)) {
      ++nonfinite;
    } else if (v < 0.0 || v > 1.0) {
      ++outside;
      worst = v;
    }
  }
  if (nonfinite > 0) {
    out.push_back({ViolationKind::NonFinite,
                   std::string(where) + ": " + std::to_string(nonfinite) + " non-finite values"});
  }
  if (outside > 0) {
    std::ostringstream msg;
    msg << where << ": " << outside << " values outside [0,1] (e.g. " << worst << ")";
    out.push_back({ViolationKind::Range, msg.str()});
  }
}

void check_image(const ImageFrame& f, std::string_view where, ValidationReport& out) {
  for (int c = 0; c < ImageFrame::kChannels; ++c) {
    check_unit_field(f.plane(c), std::string(where) + "[c" + std::to_string(c) + "]", out);
  }
}

ValidationReport validate_sample(const ClipSample& s) {
  ValidationReport report;
  const std::size_t t = s.frames.size();
  if (t == 0) report.push_back({ViolationKind::Empty, "clip has no frames"});
  if (s.alphas.size() != t || s.trimaps.size() != t) {
    report.push_back({ViolationKind::LengthMismatch,
                      "sequence lengths differ: frames " + std::to_string(t) + ", alphas " +
                          std::to_string(s.alphas.size()) + ", trimaps " +
                          std::to_string(s.trimaps.size())});
  }
  if (t == 0) return report;

  const int h = s.frames[0].height();
  const int w = s.frames[0].width();
  if (h < kMinRasterSide || w < kMinRasterSide) {
    report.push_back({ViolationKind::TooSmall, "frame smaller than 8x8: " + std::to_string(h) +
                                                   "x" + std::to_string(w)});
  }
  auto size_ok = [&](int hh, int ww) { return hh == h && ww == w; };
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const std::string tag = "frame " + std::to_string(i);
    if (!size_ok(s.frames[i].height(), s.frames[i].width())) {
      report.push_back({ViolationKind::SizeMismatch, tag + ": size differs from frame 0"});
    }
    check_image(s.frames[i], tag, report);
  }
  for (std::size_t i = 0; i < s.alphas.size(); ++i) {
    const std::string tag = "alpha " + std::to_string(i);
    if (!size_ok(s.alphas[i].height(), s.alphas[i].width())) {
      report.push_back({ViolationKind::SizeMismatch, tag + ": size differs from frame 0"});
    }
    check_unit_field(s.alphas[i], tag, report);
  }
  for (std::size_t i = 0; i < s.trimaps.size(); ++i) {
    const std::string tag = "trimap " + std::to_string(i);
    if (!size_ok(s.trimaps[i].height(), s.trimaps[i].width())) {
      report.push_back({ViolationKind::SizeMismatch, tag + ": size differs from frame 0"});
    }
    for (auto l : s.trimaps[i].values()) {
      if (static_cast<int>(l) > 2) {
        report.push_back({ViolationKind::Label, tag + ": label outside {BG,UNKNOWN,FG}"});
        break;
      }
    }
  }
  return report;
}

}  // namespace facemat
