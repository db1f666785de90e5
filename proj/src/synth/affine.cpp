#include "facemat/synth/affine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace facemat::synth {

AffineTransform AffineTransform::translation(double tx, double ty) {
  AffineTransform a;
  a.m[0][2] = tx;
  a.m[1][2] = ty;
  return a;
}

AffineTransform AffineTransform::similarity(double cx, double cy, double degrees, double scale,
                                            double tx, double ty) {
  const double r = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(r) * scale;
  const double s = std::sin(r) * scale;
  AffineTransform a;
  a.m[0][0] = c;
  a.m[0][1] = -s;
  a.m[1][0] = s;
  a.m[1][1] = c;
  // Keep (cx, cy) fixed before translating.
  a.m[0][2] = cx - c * cx + s * cy + tx;
  a.m[1][2] = cy - s * cx - c * cy + ty;
  return a;
}

bool AffineTransform::valid() const noexcept {
  for (const auto& row : m) {
    for (double v : row) {
      if (!std::isfinite(v)) return false;
    }
  }
  return std::abs(det()) > 1e-12;
}

AffineTransform AffineTransform::inverse() const {
  const double d = det();
  if (!valid()) throw InvalidInput("AffineTransform::inverse: singular or non-finite transform");
  AffineTransform r;
  r.m[0][0] = m[1][1] / d;
  r.m[0][1] = -m[0][1] / d;
  r.m[1][0] = -m[1][0] / d;
  r.m[1][1] = m[0][0] / d;
  r.m[0][2] = -(r.m[0][0] * m[0][2] + r.m[0][1] * m[1][2]);
  r.m[1][2] = -(r.m[1][0] * m[0][2] + r.m[1][1] * m[1][2]);
  return r;
}

AffineTransform AffineTransform::compose(const AffineTransform& o) const {
  AffineTransform r;
  for (int i = 0; i < 2; ++i) {
    r.m[i][0] = m[i][0] * o.m[0][0] + m[i][1] * o.m[1][0];
    r.m[i][1] = m[i][0] * o.m[0][1] + m[i][1] * o.m[1][1];
    r.m[i][2] = m[i][0] * o.m[0][2] + m[i][1] * o.m[1][2] + m[i][2];
  }
  return r;
}

void AffineTransform::apply(double x, double y, double& ox, double& oy) const noexcept {
  ox = m[0][0] * x + m[0][1] * y + m[0][2];
  oy = m[1][0] * x + m[1][1] * y + m[1][2];
}

AffineTransform interp_affine(const AffineTransform& a0, const AffineTransform& a1, int t, int length) {
  if (length < 1 || t < 0 || t >= length) throw InvalidInput("interp_affine: need 0 <= t < T, T >= 1");
  if (t == 0 || length == 1) return a0;
  if (t == length - 1) return a1;
  const double w = static_cast<double>(t) / (length - 1);
  AffineTransform r;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) r.m[i][j] = (1.0 - w) * a0.m[i][j] + w * a1.m[i][j];
  }
  return r;
}

namespace {

inline double sample(const Field& f, double x, double y, Padding pad) {
  const int h = f.height(), w = f.width();
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) -> double {
    if (pad == Padding::Edge) {
      xx = std::clamp(xx, 0, w - 1);
      yy = std::clamp(yy, 0, h - 1);
      return f(yy, xx);
    }
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
    return f(yy, xx);
  };
  // Exact copy at integer positions.
  if (fx == 0.0 && fy == 0.0) return at(y0, x0);
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace

Field warp(const Field& src, const AffineTransform& a, Padding pad, int out_h, int out_w) {
  if (out_h < 0) out_h = src.height();
  if (out_w < 0) out_w = src.width();
  const AffineTransform inv = a.inverse();
  Field out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      inv.apply(x, y, sx, sy);
      out(y, x) = sample(src, sx, sy, pad);
    }
  }
  return out;
}

ImageFrame warp(const ImageFrame& src, const AffineTransform& a, Padding pad, int out_h, int out_w) {
  if (out_h < 0) out_h = src.height();
  if (out_w < 0) out_w = src.width();
  ImageFrame out(out_h, out_w);
  for (int c = 0; c < 3; ++c) out.plane(c) = warp(src.plane(c), a, pad, out_h, out_w);
  return out;
}

}  // namespace facemat::synth
