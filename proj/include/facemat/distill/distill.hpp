#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "facemat/core/manifest.hpp"
#include "facemat/distill/checkpoint.hpp"
#include "facemat/losses/losses.hpp"
#include "facemat/model/model.hpp"

namespace facemat::distill {

enum class Weighting {
  Linear,
  Exponential,
  /// w ≡ w1 everywhere; the teacher is not consulted.
  Uniform,
};
enum class UncNormalization { Clamp01, None };
/// Which teacher output is read as σ.
enum class SigmaSource { UncMean, UncLogvar };

std::string_view to_string(Weighting w);
std::optional<Weighting> parse_weighting(std::string_view s);
std::string_view to_string(UncNormalization n);
std::optional<UncNormalization> parse_normalization(std::string_view s);
std::string_view to_string(SigmaSource s);
std::optional<SigmaSource> parse_sigma_source(std::string_view s);

struct UGKDConfig {
  double w1 = 2.0;
  double w2 = 2.0;
  Weighting weighting = Weighting::Linear;
  double exp_w = 2.0;
  double ema_decay = 0.97;
  bool ema_enabled = true;
  UncNormalization normalization = UncNormalization::Clamp01;
  SigmaSource sigma_source = SigmaSource::UncMean;

  std::vector<std::string> validate() const;
};

/// LINEAR: w1 + w2·σ̃; EXPONENTIAL: exp(exp_w·σ̃); UNIFORM: w1. σ̃ is σ
/// after normalization (CLAMP01: min(σ, 1)). Rejects negative σ.
Field ugkd_weight(const UncertaintyMap& sigma, const UGKDConfig& cfg);

/// The teacher's uncertainty map: μ_u clamped at 0, or exp(unc_logvar).
UncertaintyMap teacher_sigma(const losses::PredictionBundle& teacher, const UGKDConfig& cfg);

/// θ_T ← decay·θ_T + (1−decay)·θ_S elementwise.
template <class T>
void ema_update(std::span<T> teacher, std::span<const T> student, double decay) {
  if (teacher.size() != student.size()) throw InvalidInput("ema_update: parameter size mismatch");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    teacher[i] = static_cast<T>(decay * teacher[i] + (1.0 - decay) * student[i]);
  }
}

/// Whole-network EMA; parameter names and shapes must match.
void ema_update(model::MattingNet& teacher, const model::MattingNet& student, double decay);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const std::vector<model::NamedParam>& params, const AdamConfig& cfg);
  /// One update using the accumulated parameter gradients.
  void step(std::vector<model::NamedParam>& params, double lr);
  std::uint64_t steps() const noexcept { return t_; }

  void save(Checkpoint& c, const std::vector<model::NamedParam>& params) const;
  void restore(const Checkpoint& c, const std::vector<model::NamedParam>& params);

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<nn::Tensor> m_, v_;
};

enum class LrSchedule { Constant, Cosine };
std::string_view to_string(LrSchedule s);
std::optional<LrSchedule> parse_lr_schedule(std::string_view s);

struct TrainConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  /// Optimizer steps; when 0, epochs × steps-per-epoch.
  int steps = 300;
  int epochs = 0;
  int batch_size = 1;
  /// Frames per training window; 0 uses whole clips.
  int clip_length = 0;
  double lr = 1e-4;
  LrSchedule lr_schedule = LrSchedule::Constant;
  std::uint64_t seed = 0;
  /// Save an intermediate checkpoint every N steps (0: final only).
  int checkpoint_every = 0;
  /// Continue from this checkpoint when set.
  std::filesystem::path resume;
  /// Echo of extra settings for the log header (e.g. CLI provenance).
  std::map<std::string, std::string> header_extra;

  std::vector<std::string> validate() const;
};

/// Raised on a non-finite loss or gradient; names the last good checkpoint.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const noexcept { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct StepLog {
  std::uint64_t step = 0;
  std::map<std::string, double> terms;
  double lr = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<StepLog> trail;
};

inline constexpr const char* kTeacherCheckpoint = "teacher.ckpt";
inline constexpr const char* kStudentCheckpoint = "student.ckpt";
inline constexpr const char* kTrainLog = "train_log.jsonl";

/// Stage 1: trimap-masked regression plus β-NLL heads. Writes
/// out_dir/teacher.ckpt and out_dir/train_log.jsonl.
TrainResult train_stage1(const TrainConfig& cfg, const model::ModelConfig& mcfg, const losses::Stage1Weights& w);

/// Stage 2: student and EMA teacher both start from the stage-1 checkpoint;
/// the student minimizes stage2_loss weighted by the teacher's uncertainty.
/// Never reads trimaps. `student_model`, when given, must match the teacher.
TrainResult train_stage2(const std::filesystem::path& teacher_ckpt, const TrainConfig& cfg, const UGKDConfig& ugkd,
                         int lap_levels = 5, const std::optional<model::ModelConfig>& student_model = std::nullopt);

/// Stage-1 total averaged over every clip of a split (whole clips, no
/// gradients). Gives step-independent loss comparisons.
double mean_stage1_loss(const model::MattingNet& net, const DatasetManifest& m, Split split,
                        const losses::Stage1Weights& w);

/// Sum of squared gradient entries over a network's parameters.
double grad_norm_sq(const model::MattingNet& net);

}  // namespace facemat::distill
