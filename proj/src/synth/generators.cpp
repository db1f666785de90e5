#include "facemat/synth/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace facemat::synth {
namespace {

constexpr double kPi = std::numbers::pi;

struct Point {
  double x, y;
};

using Color = std::array<double, 3>;

Point catmull_rom(const Point& p0, const Point& p1, const Point& p2, const Point& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  auto f = [&](double a, double b, double c, double d) {
    return 0.5 * (2 * b + (-a + c) * t + (2 * a - 5 * b + 4 * c - d) * t2 + (-a + 3 * b - 3 * c + d) * t3);
  };
  return {f(p0.x, p1.x, p2.x, p3.x), f(p0.y, p1.y, p2.y, p3.y)};
}

/// Even-odd scanline fill sampled at pixel centres (x, y).
AlphaMatte fill_polygon(const std::vector<Point>& poly, int h, int w) {
  AlphaMatte out(h, w, 0.0);
  std::vector<double> xs;
  const std::size_t n = poly.size();
  for (int y = 0; y < h; ++y) {
    xs.clear();
    const double yc = y;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = poly[i];
      const Point& b = poly[(i + 1) % n];
      if ((a.y <= yc && b.y > yc) || (b.y <= yc && a.y > yc)) {
        xs.push_back(a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(xs[k + 1])));
      for (int x = x0; x <= x1; ++x) out(y, x) = 1.0;
    }
  }
  return out;
}

inline bool in_ellipse(double x, double y, double cx, double cy, double ax, double ay) {
  const double dx = (x - cx) / ax, dy = (y - cy) / ay;
  return dx * dx + dy * dy <= 1.0;
}

inline double seg_distance(const Point& p, const Point& a, const Point& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

Color random_color(Rng& rng, double lo = 0.05, double hi = 0.95) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

void paint(ImageFrame& img, int y, int x, const Color& c) {
  for (int k = 0; k < 3; ++k) img(k, y, x) = c[k];
}

/// Vertical blend between two colours.
ImageFrame gradient_fill(int h, int w, const Color& top, const Color& bottom) {
  ImageFrame img(h, w);
  for (int y = 0; y < h; ++y) {
    const double t = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < 3; ++k) img(k, y, x) = (1 - t) * top[k] + t * bottom[k];
    }
  }
  return img;
}

Color scaled(const Color& c, double s) {
  return {std::clamp(c[0] * s, 0.0, 1.0), std::clamp(c[1] * s, 0.0, 1.0), std::clamp(c[2] * s, 0.0, 1.0)};
}

}  // namespace

double area_fraction(const Field& alpha) {
  if (alpha.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : alpha.values()) s += v;
  return s / static_cast<double>(alpha.size());
}

AlphaMatte gen_random_shape(Rng& rng, int height, int width) {
  if (height < 16 || width < 16) throw InvalidInput("gen_random_shape: canvas must be >= 16x16");
  const double side = std::min(height, width);
  const double cx = width * rng.uniform(0.35, 0.65);
  const double cy = height * rng.uniform(0.35, 0.65);
  const int n = rng.uniform_int(4, 10);
  std::vector<Point> ctrl(n);
  for (int i = 0; i < n; ++i) {
    const double ang = (i + rng.uniform(-0.3, 0.3)) * 2.0 * kPi / n;
    const double r = side * rng.uniform(0.12, 0.35);
    ctrl[i] = {cx + r * std::cos(ang), cy + r * std::sin(ang)};
  }
  constexpr int kSteps = 16;
  std::vector<Point> curve;
  curve.reserve(static_cast<std::size_t>(n) * kSteps);
  for (int i = 0; i < n; ++i) {
    const Point& p0 = ctrl[(i + n - 1) % n];
    const Point& p1 = ctrl[i];
    const Point& p2 = ctrl[(i + 1) % n];
    const Point& p3 = ctrl[(i + 2) % n];
    for (int s = 0; s < kSteps; ++s) curve.push_back(catmull_rom(p0, p1, p2, p3, static_cast<double>(s) / kSteps));
  }
  return fill_polygon(curve, height, width);
}

ProceduralFace gen_procedural_face(Rng& rng, int size) {
  if (size < 64) throw InvalidInput("gen_procedural_face: size must be >= 64");
  const double s = size;
  ProceduralFace face{gradient_fill(size, size, random_color(rng), random_color(rng)),
                      AlphaMatte(size, size, 0.0)};
  ImageFrame& img = face.image;

  const double cx = s * rng.uniform(0.42, 0.58);
  const double cy = s * rng.uniform(0.46, 0.56);
  const double ax = s * rng.uniform(0.20, 0.27);
  const double ay = s * rng.uniform(0.28, 0.36);

  const double tone = rng.uniform(0.45, 1.05);
  const Color skin = scaled({0.92, 0.72, 0.60}, tone);
  const Color ear = scaled(skin, 0.9);
  const Color hair = scaled(random_color(rng, 0.05, 0.6), rng.uniform(0.4, 1.0));
  const Color lips = {std::clamp(0.75 * tone, 0.0, 1.0), 0.3 * tone, 0.3 * tone};

  // Hairline height above the face centre, in units of ay, with a wavy fringe.
  const double hairline = rng.uniform(0.45, 0.7);
  const double fringe_amp = s * rng.uniform(0.0, 0.03);
  const double fringe_freq = rng.uniform(0.05, 0.2);
  const double fringe_phase = rng.uniform(0.0, 2 * kPi);
  const double hair_ax = ax * rng.uniform(1.08, 1.2);
  const double hair_ay = ay * rng.uniform(1.05, 1.15);
  const double ear_ax = s * 0.05, ear_ay = s * 0.09;

  const double eye_dx = 0.38 * ax, eye_y = cy - 0.12 * ay;
  const double eye_ax = 0.16 * ax, eye_ay = 0.07 * ay;
  const double iris_r = 0.06 * ax + 1.0;
  const double brow_y = cy - 0.27 * ay;
  const double mouth_y = cy + 0.5 * ay, mouth_ax = 0.3 * ax, mouth_ay = 0.07 * ay;
  const double nose_y = cy + 0.18 * ay;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x, py = y;
      const bool in_face = in_ellipse(px, py, cx, cy, ax, ay);
      const double line = cy - hairline * ay + fringe_amp * std::sin(fringe_freq * px + fringe_phase);
      const bool in_hair = in_ellipse(px, py, cx, cy, hair_ax, hair_ay) && py < line;

      if (in_hair) {
        paint(img, y, x, hair);
        continue;
      }
      if (!in_face) {
        if (in_ellipse(px, py, cx - ax, cy, ear_ax, ear_ay) || in_ellipse(px, py, cx + ax, cy, ear_ax, ear_ay)) {
          paint(img, y, x, ear);
        }
        continue;
      }
      face.skin(y, x) = 1.0;
      Color c = skin;
      // Facial features are part of the skin foreground.
      for (double side : {-1.0, 1.0}) {
        const double ex = cx + side * eye_dx;
        if (in_ellipse(px, py, ex, eye_y, eye_ax, eye_ay)) {
          c = {0.95, 0.95, 0.95};
          if (std::hypot(px - ex, py - eye_y) <= iris_r) c = {0.15, 0.1, 0.08};
        }
        if (std::abs(py - brow_y) <= 0.025 * ay + 0.5 && std::abs(px - ex) <= eye_ax * 1.1) c = scaled(hair, 0.9);
      }
      if (in_ellipse(px, py, cx, nose_y, 0.07 * ax, 0.12 * ay)) c = scaled(skin, 0.85);
      if (in_ellipse(px, py, cx, mouth_y, mouth_ax, mouth_ay)) c = lips;
      paint(img, y, x, c);
    }
  }
  return face;
}

ImageFrame gen_texture(Rng& rng, int height, int width) {
  ImageFrame img(height, width);
  constexpr int kWaves = 4;
  for (int c = 0; c < 3; ++c) {
    std::array<double, kWaves> fx{}, fy{}, ph{}, amp{};
    for (int k = 0; k < kWaves; ++k) {
      const double freq = rng.uniform(0.05, 0.6);
      const double ang = rng.uniform(0.0, kPi);
      fx[k] = freq * std::cos(ang);
      fy[k] = freq * std::sin(ang);
      ph[k] = rng.uniform(0.0, 2 * kPi);
      amp[k] = rng.uniform(0.3, 1.0);
    }
    const double base = rng.uniform(0.25, 0.75);
    const double gain = rng.uniform(0.05, 0.25);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = 0.0;
        for (int k = 0; k < kWaves; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
        img(c, y, x) = std::clamp(base + gain * v, 0.0, 1.0);
      }
    }
  }
  return img;
}

namespace {

OcclusionAsset hand_asset(Rng& rng, int side) {
  const double s = side;
  OcclusionAsset a{gradient_fill(side, side, {}, {}), AlphaMatte(side, side, 0.0), OcclusionSource::HardMask};
  const Color glove = rng.bernoulli(0.5) ? scaled({0.9, 0.7, 0.58}, rng.uniform(0.5, 1.0)) : random_color(rng);
  a.color = gradient_fill(side, side, scaled(glove, 1.1), scaled(glove, 0.8));

  const double pcx = s * 0.5, pcy = s * 0.68, pax = s * 0.2, pay = s * 0.22;
  struct Capsule {
    Point a, b;
    double r;
  };
  std::vector<Capsule> fingers;
  const int n_fingers = 4;
  for (int i = 0; i < n_fingers; ++i) {
    const double bx = pcx + (i - 1.5) * pax * 0.55;
    const double ang = -kPi / 2 + (i - 1.5) * rng.uniform(0.05, 0.18);
    const double len = s * rng.uniform(0.22, 0.34);
    fingers.push_back({{bx, pcy - pay * 0.6}, {bx + len * std::cos(ang), pcy - pay * 0.6 + len * std::sin(ang)}, s * 0.045});
  }
  const double th_ang = kPi + rng.uniform(-0.6, -0.2);
  fingers.push_back({{pcx - pax * 0.7, pcy}, {pcx - pax * 0.7 + s * 0.22 * std::cos(th_ang), pcy + s * 0.22 * std::sin(th_ang)}, s * 0.05});

  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      bool in = in_ellipse(p.x, p.y, pcx, pcy, pax, pay);
      for (const auto& f : fingers) in = in || seg_distance(p, f.a, f.b) <= f.r;
      a.alpha(y, x) = in ? 1.0 : 0.0;
    }
  }
  return a;
}

OcclusionAsset strand_asset(Rng& rng, int side) {
  const double s = side;
  OcclusionAsset a{ImageFrame(side, side), AlphaMatte(side, side, 0.0), OcclusionSource::Matte};
  const Color base = scaled(random_color(rng, 0.05, 0.7), rng.uniform(0.5, 1.0));
  a.color = gradient_fill(side, side, scaled(base, 1.15), scaled(base, 0.85));

  // Opaque core blob with soft strands radiating out of it.
  const double cx = s * 0.5, cy = s * 0.45, core_r = s * rng.uniform(0.12, 0.2);
  const int n_strands = rng.uniform_int(6, 14);
  struct Strand {
    double x0, amp, freq, phase, width;
  };
  std::vector<Strand> strands(n_strands);
  for (auto& st : strands) {
    st = {cx + s * rng.uniform(-0.25, 0.25), s * rng.uniform(0.02, 0.08), rng.uniform(0.03, 0.12),
          rng.uniform(0.0, 2 * kPi), s * rng.uniform(0.015, 0.04)};
  }
  const double y_end = s * rng.uniform(0.75, 0.95);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      double v = std::clamp((core_r + 2.0 - d) / 4.0, 0.0, 1.0);
      if (y >= cy && y <= y_end) {
        // Strands thin out towards their tips.
        const double taper = 1.0 - (y - cy) / (y_end - cy);
        for (const auto& st : strands) {
          const double sx = st.x0 + st.amp * std::sin(st.freq * y + st.phase);
          const double dist = std::abs(x - sx);
          v = std::max(v, std::clamp(1.0 - dist / (st.width * (0.3 + 0.7 * taper)), 0.0, 1.0) * (0.4 + 0.6 * taper));
        }
      }
      a.alpha(y, x) = v;
    }
  }
  return a;
}

}  // namespace

OcclusionAsset builtin_asset(OcclusionSource source, Rng& rng, int canvas) {
  const int side = std::max(16, static_cast<int>(canvas * rng.uniform(0.7, 1.0)));
  switch (source) {
    case OcclusionSource::HardMask: return hand_asset(rng, side);
    case OcclusionSource::Matte: return strand_asset(rng, side);
    case OcclusionSource::RandomShape: {
      OcclusionAsset a{ImageFrame(), gen_random_shape(rng, side, side), source};
      a.color = gradient_fill(side, side, random_color(rng), random_color(rng));
      return a;
    }
    case OcclusionSource::Texture: {
      OcclusionAsset a{ImageFrame(), gen_random_shape(rng, side, side), source};
      a.color = gen_texture(rng, side, side);
      return a;
    }
    case OcclusionSource::None: break;
  }
  throw InvalidInput("builtin_asset: no generator for source 'none'");
}

ImageFrame color_jitter(const ImageFrame& img, Rng& rng, const SynthConfig& cfg) {
  ImageFrame out = img;
  if (cfg.jitter_brightness > 0) {
    const double b = rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness);
    for (int c = 0; c < 3; ++c) {
      for (double& v : out.plane(c).values()) v = std::clamp(v + b, 0.0, 1.0);
    }
  }
  if (cfg.jitter_contrast > 0) {
    const double k = rng.uniform(1.0 - cfg.jitter_contrast, 1.0 + cfg.jitter_contrast);
    for (int c = 0; c < 3; ++c) {
      for (double& v : out.plane(c).values()) v = std::clamp((v - 0.5) * k + 0.5, 0.0, 1.0);
    }
  }
  if (cfg.jitter_saturation > 0) {
    const double k = rng.uniform(1.0 - cfg.jitter_saturation, 1.0 + cfg.jitter_saturation);
    const std::size_t n = out.plane(0).size();
    for (std::size_t i = 0; i < n; ++i) {
      const double gray = 0.299 * out.plane(0)[i] + 0.587 * out.plane(1)[i] + 0.114 * out.plane(2)[i];
      for (int c = 0; c < 3; ++c) {
        double& v = out.plane(c)[i];
        v = std::clamp(gray + (v - gray) * k, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace facemat::synth
