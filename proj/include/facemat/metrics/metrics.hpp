#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facemat/core/manifest.hpp"
#include "facemat/core/types.hpp"

namespace facemat::metrics {

/// Matting errors are computed on trimap UNKNOWN pixels only. Each returns
/// nullopt when that region is empty (not applicable for the frame). Grad and
/// Conn first set the prediction to 0 on BG and 1 on FG, so no metric sees
/// prediction values outside UNKNOWN.

/// Mean of (pred − gt)².
std::optional<double> mse_unknown(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap);
/// Σ|pred − gt| / 1000.
std::optional<double> sad_unknown(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap);
/// Σ(‖∇pred‖ − ‖∇gt‖)² / 1000 with Gaussian-derivative gradients.
std::optional<double> grad_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                                 double sigma = 1.4);
/// Connectivity error / 1000; thresholds 0, step, ..., 1 with 4-connectivity.
std::optional<double> conn_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                                 double step = 0.1);

/// Half-width of the truncated Gaussian-derivative kernel for `sigma`.
int gradient_halfsize(double sigma);
/// 1-D factors g (Gaussian) and d (derivative) such that the 2-D x-kernel is
/// d(x)·g(y), normalized to unit L2 norm over the (2r+1)² support.
void gradient_kernels(double sigma, std::vector<double>& gauss, std::vector<double>& deriv);
/// ‖∇f‖ with replicated borders.
Field gradient_magnitude(const Field& f, double sigma = 1.4);

/// The per-pixel threshold map of the connectivity error: for every pixel,
/// the last threshold at which it still belonged to the largest component
/// shared by pred and gt (1 if it never dropped out).
Field connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step = 0.1);

/// 1 where matte ≥ threshold.
Mask binarize(const Field& matte, double threshold = 0.5);

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};
Confusion confusion(const Mask& pred, const Mask& gt);

/// TP/(TP+FP+FN); 1 when both masks are empty.
double iou(const Mask& pred, const Mask& gt);
double pixel_accuracy(const Mask& pred, const Mask& gt);
/// TP/(TP+FN); 1 when gt has no positives.
double recall(const Mask& pred, const Mask& gt);

struct MetricConfig {
  double grad_sigma = 1.4;
  double conn_step = 0.1;
  double threshold = 0.5;
};

/// One row of the report. Matting values are nullopt when no frame of the
/// sample had UNKNOWN pixels.
struct MetricRow {
  std::optional<double> mse, sad, grad, conn;
  double iou = 0.0, accuracy = 0.0, recall = 0.0;
};

struct SampleResult {
  std::string sample_id;
  int frames = 0;
  /// Frames whose UNKNOWN region was empty.
  int na_frames = 0;
  bool ok = true;
  std::string error;
  MetricRow metrics;
};

/// Every metric for one frame.
MetricRow frame_metrics(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap, const MetricConfig& cfg);

struct EvalConfig {
  MetricConfig metric;
  Split split = Split::Test;
  /// Score the ground truth instead of running a checkpoint.
  bool oracle = false;
  int workers = 1;
};

struct EvalReport {
  std::string checkpoint_hash;
  std::string split;
  EvalConfig config;
  std::vector<SampleResult> samples;
  /// Means over successful samples; matting means skip N/A samples.
  MetricRow aggregate;
  int evaluated = 0;
  int failed = 0;
  int not_applicable = 0;

  std::string to_text() const;
  std::string to_json() const;
};

/// Means over the successful samples of `samples`.
MetricRow aggregate(const std::vector<SampleResult>& samples);

/// Runs the checkpoint (ignored in oracle mode) over every clip of the split,
/// frames in order. Sample failures are recorded and evaluation continues.
EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    const EvalConfig& cfg);

/// Writes `<base>.txt` and `<base>.json`.
void write_report(const EvalReport& r, const std::filesystem::path& base);

/// Header and aggregate line in the order MSE SAD Grad Conn IoU Accuracy.
std::string summary_row(const MetricRow& m);

}  // namespace facemat::metrics
