#pragma once

#include "facemat/core/types.hpp"

namespace facemat::synth {

/// out = alpha * fg + (1 - alpha) * bg per pixel and channel.
ImageFrame composite_pixelwise(const ImageFrame& fg, const ImageFrame& bg, const AlphaMatte& alpha);

/// Ground-truth face alpha: skin ⊙ (1 - occluder alpha).
AlphaMatte make_face_alpha(const AlphaMatte& skin_mask, const AlphaMatte& occ_alpha);

/// Separable Gaussian with radius ceil(3 sigma), renormalized, edge-replicated.
Field gaussian_blur(const Field& f, double sigma);

/// Softens a binary mask's boundary. Pixels farther than 3 sigma from the
/// boundary are untouched.
AlphaMatte blur_mask_boundary(const AlphaMatte& mask, double sigma);

/// Erosion with a Euclidean disk of radius r. Out-of-raster neighbours do
/// not constrain the result.
Mask erode(const Mask& m, int radius);
Mask dilate(const Mask& m, int radius);

constexpr double kFgThreshold = 0.99;
constexpr double kBgThreshold = 0.01;

/// FG where the eroded {alpha >= 0.99} holds, BG where the eroded
/// {alpha <= 0.01} holds, UNKNOWN elsewhere and within dilate_r of any
/// fractional pixel.
Trimap gen_trimap(const AlphaMatte& alpha_gt, int erode_r, int dilate_r);

}  // namespace facemat::synth
