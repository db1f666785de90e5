#include "facemat/synth/compose.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace facemat::synth {

ImageFrame composite_pixelwise(const ImageFrame& fg, const ImageFrame& bg, const AlphaMatte& alpha) {
  require_same_shape(fg, bg, "composite_pixelwise");
  require_same_shape(fg, alpha, "composite_pixelwise");
  ImageFrame out(fg.height(), fg.width());
  for (int c = 0; c < 3; ++c) {
    const Field& f = fg.plane(c);
    const Field& b = bg.plane(c);
    Field& o = out.plane(c);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double a = alpha[i];
      // Endpoints are returned exactly rather than through the blend.
      if (a == 0.0) {
        o[i] = b[i];
      } else if (a == 1.0) {
        o[i] = f[i];
      } else {
        o[i] = std::clamp(a * f[i] + (1.0 - a) * b[i], 0.0, 1.0);
      }
    }
  }
  return out;
}

AlphaMatte make_face_alpha(const AlphaMatte& skin_mask, const AlphaMatte& occ_alpha) {
  require_same_shape(skin_mask, occ_alpha, "make_face_alpha");
  AlphaMatte out(skin_mask.height(), skin_mask.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(skin_mask[i] * (1.0 - occ_alpha[i]), 0.0, 1.0);
  }
  return out;
}

Field gaussian_blur(const Field& f, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("gaussian_blur: sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;

  const int h = f.height(), w = f.width();
  Field tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * f(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  }
  return out;
}

AlphaMatte blur_mask_boundary(const AlphaMatte& mask, double sigma) {
  AlphaMatte out = gaussian_blur(mask, sigma);
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Constant neighbourhoods reproduce their value up to rounding; snap them.
    if (std::abs(out[i] - mask[i]) < 1e-12) out[i] = mask[i];
    out[i] = std::clamp(out[i], 0.0, 1.0);
  }
  return out;
}

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> offs;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offs.emplace_back(dy, dx);
    }
  }
  return offs;
}

}  // namespace

Mask erode(const Mask& m, int radius) {
  const auto offs = disk_offsets(radius);
  const int h = m.height(), w = m.width();
  Mask out(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      bool keep = true;
      for (auto [dy, dx] : offs) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
        if (!m(yy, xx)) {
          keep = false;
          break;
        }
      }
      out(y, x) = keep ? 1 : 0;
    }
  }
  return out;
}

Mask dilate(const Mask& m, int radius) {
  const auto offs = disk_offsets(radius);
  const int h = m.height(), w = m.width();
  Mask out(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      for (auto [dy, dx] : offs) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
        out(yy, xx) = 1;
      }
    }
  }
  return out;
}

Trimap gen_trimap(const AlphaMatte& alpha, int erode_r, int dilate_r) {
  if (erode_r < 1 || dilate_r < 1) throw InvalidInput("gen_trimap: radii must be >= 1");
  const int h = alpha.height(), w = alpha.width();
  Mask fg(h, w, 0), bg(h, w, 0), frac(h, w, 0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    fg[i] = alpha[i] >= kFgThreshold;
    bg[i] = alpha[i] <= kBgThreshold;
    frac[i] = !fg[i] && !bg[i];
  }
  const Mask fg_core = erode(fg, erode_r);
  const Mask bg_core = erode(bg, erode_r);
  const Mask band = dilate(frac, dilate_r);
  Trimap t(h, w, TrimapLabel::Unknown);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (band[i]) continue;
    if (fg_core[i]) {
      t[i] = TrimapLabel::Foreground;
    } else if (bg_core[i]) {
      t[i] = TrimapLabel::Background;
    }
  }
  return t;
}

}  // namespace facemat::synth
