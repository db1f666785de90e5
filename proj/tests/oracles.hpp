#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance harness.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "facemat/distill/checkpoint.hpp"
#include "facemat/losses/losses.hpp"
#include "support.hpp"

namespace facemat::oracle {

/// Entrywise check of an analytic gradient against central differences.
/// Returns the worst relative error.
inline double fd_worst(Field x, const Field& analytic, const std::function<double(const Field&)>& f, double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double dn = f(x);
    x[i] = orig;
    const double num = (up - dn) / (2 * h);
    const double scale = std::max(std::abs(num), std::abs(analytic[i]));
    const double err = std::abs(num - analytic[i]);
    // Entries that are zero in both are exact; the absolute floor absorbs
    // the finite-difference rounding (~1e-10 here).
    worst = std::max(worst, err <= 1e-9 ? 0.0 : err / scale);
  }
  return worst;
}

// Brute-force references, written directly from the definitions.
inline double oracle_mse(const Field& p, const Field& g, const Trimap& t) {
  double s = 0.0;
  int n = 0;
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      if (t(y, x) != TrimapLabel::Unknown) continue;
      s += (p(y, x) - g(y, x)) * (p(y, x) - g(y, x));
      ++n;
    }
  }
  return s / n;
}

inline double oracle_sad(const Field& p, const Field& g, const Trimap& t) {
  double s = 0.0;
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      if (t(y, x) == TrimapLabel::Unknown) s += std::abs(p(y, x) - g(y, x));
    }
  }
  return s / 1000.0;
}

// Dense 9×9 correlation with the 2-D Gaussian-derivative kernel at σ = 1.4.
inline double oracle_grad(Field pred, const Field& gt, const Trimap& t) {
  constexpr double s = 1.4;
  constexpr int r = 4;
  auto gauss = [&](double v) { return std::exp(-v * v / (2 * s * s)) / (s * std::sqrt(2 * M_PI)); };
  double kx[9][9], ky[9][9], norm = 0.0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      kx[i + r][j + r] = -j / (s * s) * gauss(j) * gauss(i);
      norm += kx[i + r][j + r] * kx[i + r][j + r];
    }
  }
  for (auto& row : kx) {
    for (double& v : row) v /= std::sqrt(norm);
  }
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) ky[i][j] = kx[j][i];
  }
  const int H = pred.height(), W = pred.width();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (t(y, x) == TrimapLabel::Background) pred(y, x) = 0.0;
      if (t(y, x) == TrimapLabel::Foreground) pred(y, x) = 1.0;
    }
  }
  auto mag = [&](const Field& f, int y, int x) {
    double gx = 0.0, gy = 0.0;
    for (int i = -r; i <= r; ++i) {
      for (int j = -r; j <= r; ++j) {
        const double v = f(std::clamp(y + i, 0, H - 1), std::clamp(x + j, 0, W - 1));
        gx += kx[i + r][j + r] * v;
        gy += ky[i + r][j + r] * v;
      }
    }
    return std::sqrt(gx * gx + gy * gy);
  };
  double sum = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (t(y, x) != TrimapLabel::Unknown) continue;
      const double d = mag(pred, y, x) - mag(gt, y, x);
      sum += d * d;
    }
  }
  return sum / 1000.0;
}

inline std::vector<ImageFrame> random_clip(Rng& rng, int t, int h, int w) {
  std::vector<ImageFrame> c;
  for (int i = 0; i < t; ++i) c.push_back(testing::random_image(rng, h, w));
  return c;
}

inline double max_bundle_diff(const losses::PredictionBundle& a, const losses::PredictionBundle& b) {
  double m = 0.0;
  auto cmp = [&](const Field& x, const Field& y) {
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  };
  cmp(a.alpha_mean, b.alpha_mean);
  cmp(a.alpha_logvar, b.alpha_logvar);
  cmp(a.unc_mean, b.unc_mean);
  cmp(a.unc_logvar, b.unc_logvar);
  return m;
}

inline bool same_blobs(const distill::Checkpoint& a, const distill::Checkpoint& b, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& [name, t] : a.blobs) {
    if (name.rfind(prefix, 0) != 0) continue;
    const nn::Tensor* o = b.find(name);
    if (!o || !(*o == t)) return false;
    ++n;
  }
  return n > 0;
}

/// Scripted 8×8 two-blob connectivity case; the expected value is traced
/// by hand in the metrics tests.
struct TwoBlobCase {
  Field pred, gt;
  Trimap trimap;
};

inline TwoBlobCase two_blob_case() {
  TwoBlobCase c{Field(8, 8, 0.0), Field(8, 8, 0.0), Trimap(8, 8, TrimapLabel::Unknown)};
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 3; ++x) c.gt(y, x) = 1.0;
  }
  for (int y = 2; y <= 5; ++y) {
    for (int x = 5; x < 8; ++x) c.gt(y, x) = 1.0;
  }
  c.pred = c.gt;
  for (int y = 2; y <= 5; ++y) {
    for (int x = 5; x < 8; ++x) c.pred(y, x) = 0.5;
  }
  c.pred(3, 1) = 0.5625;
  for (int y = 0; y < 8; ++y) {
    c.trimap(y, 0) = TrimapLabel::Foreground;
    c.trimap(y, 7) = c.gt(y, 7) == 1.0 ? TrimapLabel::Foreground : TrimapLabel::Background;
  }
  return c;
}
inline constexpr double kTwoBlobConn = 0.0045;

}  // namespace facemat::oracle
