#pragma once

#include <array>

#include "facemat/core/types.hpp"

namespace facemat::synth {

/// 2x3 matrix mapping source pixel coordinates (x, y) to destination:
///   x' = m[0][0] x + m[0][1] y + m[0][2]
///   y' = m[1][0] x + m[1][1] y + m[1][2]
struct AffineTransform {
  std::array<std::array<double, 3>, 2> m{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double tx, double ty);
  /// Rotation by `degrees` and isotropic `scale` about (cx, cy), followed by
  /// a translation (tx, ty).
  static AffineTransform similarity(double cx, double cy, double degrees, double scale, double tx,
                                    double ty);

  double det() const noexcept { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
  /// Finite entries and an invertible linear block.
  bool valid() const noexcept;
  AffineTransform inverse() const;
  /// this ∘ other: apply `other` first.
  AffineTransform compose(const AffineTransform& other) const;
  void apply(double x, double y, double& ox, double& oy) const noexcept;

  bool operator==(const AffineTransform&) const = default;
};

/// Entrywise linear interpolation with weight t/(T-1); weight 0 when T == 1.
AffineTransform interp_affine(const AffineTransform& a0, const AffineTransform& a1, int t, int length);

enum class Padding { Zero, Edge };

/// Bilinear inverse-mapped warp; output has the input's size unless given.
Field warp(const Field& src, const AffineTransform& a, Padding pad, int out_h = -1, int out_w = -1);
ImageFrame warp(const ImageFrame& src, const AffineTransform& a, Padding pad, int out_h = -1,
                int out_w = -1);

}  // namespace facemat::synth
