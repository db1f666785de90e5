#pragma once

#include <span>
#include <string>
#include <vector>

#include "facemat/core/types.hpp"

namespace facemat::losses {

/// Scalar loss plus a flag for degenerate inputs (empty mask, too few
/// frames, reduced pyramid) that were handled by convention.
struct LossResult {
  double value = 0.0;
  bool warning = false;
  std::string note;
};

// Every loss optionally writes dLoss/dInput into the given Field pointers,
// resized to the input's shape. Null pointers skip the gradient.

/// Mean |pred - gt| over active mask pixels; 0 with a warning on an empty mask.
LossResult l1_masked(const Field& pred, const Field& gt, const Mask& mask, Field* grad = nullptr);

/// Per-level weighted breakdown, finest first.
struct PyramidTerms {
  std::vector<double> weighted;
  std::vector<double> unweighted_sum;
};

/// Σ_k 2^(k-1) · mean_{M_k} |Lap_k(pred) - Lap_k(gt)| for k = 1..levels.
/// Levels 1..levels-1 are band-pass (5x5 binomial, reflect padding); the
/// last level is the remaining low-pass image. The mask is max-pooled 2x2
/// per level; a null mask means every pixel. Masked-out pixels take the
/// target value before the pyramid is built, so the loss ignores them
/// entirely. Levels are reduced (with a warning) when the raster is smaller
/// than 2^levels.
LossResult laplacian_pyramid_loss(const Field& pred, const Field& gt, int levels = 5, const Mask* mask = nullptr,
                                  Field* grad = nullptr, PyramidTerms* terms = nullptr);

/// Builds the pyramid of one raster; exposed for inspection and tests.
std::vector<Field> laplacian_pyramid(const Field& img, int levels);

/// Mean over t = 2..T of the masked mean of ((p_t - p_{t-1}) - (g_t - g_{t-1}))^2,
/// with the pair mask M_t ∧ M_{t-1}. Empty `masks` means unmasked.
LossResult temporal_consistency_loss(std::span<const Field> pred, std::span<const Field> gt,
                                     std::span<const Mask> masks, std::vector<Field>* grads = nullptr);

constexpr double kLogvarMin = -10.0;
constexpr double kLogvarMax = 10.0;

/// Mean of ½((target-mu)²/σ² + log σ²) · sg(σ²)^β, σ² = exp(clamp(logvar)).
/// The σ^(2β) factor is treated as a constant when differentiating.
LossResult beta_nll(const Field& mu, const Field& logvar, const Field& target, double beta,
                    const Mask* mask = nullptr, Field* grad_mu = nullptr, Field* grad_logvar = nullptr);

/// Mean over all pixels of w ⊙ |pred - gt|.
LossResult soft_l1(const Field& pred, const Field& gt, const Field& weight, Field* grad = nullptr);

/// Per-pixel teacher/student outputs. Logvars are raw (clamped inside beta_nll).
struct PredictionBundle {
  Field alpha_mean;
  Field alpha_logvar;
  Field unc_mean;
  Field unc_logvar;
};

/// What the uncertainty head regresses against.
enum class UncertaintyTarget {
  /// |alpha_gt - mu_alpha|, detached.
  Residual,
  /// alpha_gt, i.e. two heads regressing the same target.
  Alpha,
};

struct Stage1Weights {
  double beta = 0.5;
  double l1 = 1.0;
  double lap = 1.0;
  double tc = 1.0;
  double nll_u = 1.0;
  double nll_alpha = 1.0;
  int lap_levels = 5;
  /// false trains without trimap masking (every loss over the full raster).
  bool use_trimap = true;
  UncertaintyTarget unc_target = UncertaintyTarget::Residual;
};

/// Scaled terms; they sum to `total`.
struct Stage1Breakdown {
  double total = 0.0;
  double l1 = 0.0;
  double lap = 0.0;
  double tc = 0.0;
  double nll_u = 0.0;
  double nll_alpha = 0.0;
  std::vector<std::string> warnings;
};

Stage1Breakdown stage1_loss(std::span<const PredictionBundle> pred, std::span<const AlphaMatte> gt,
                            std::span<const Trimap> trimaps, const Stage1Weights& w,
                            std::vector<PredictionBundle>* grads = nullptr);

struct Stage2Breakdown {
  double total = 0.0;
  double soft_l1 = 0.0;
  double lap = 0.0;
};

/// soft_l1 + unmasked Laplacian loss, averaged over frames. Uses no trimap.
Stage2Breakdown stage2_loss(std::span<const Field> student_alpha, std::span<const AlphaMatte> gt,
                            std::span<const Field> w_unc, int lap_levels = 5, std::vector<Field>* grads = nullptr);

}  // namespace facemat::losses
