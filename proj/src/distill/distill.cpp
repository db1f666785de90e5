#include "facemat/distill/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <numeric>

#include "facemat/core/manifest.hpp"
#include "facemat/core/rng.hpp"

namespace facemat::distill {
namespace {

using json = nlohmann::json;
using losses::PredictionBundle;
using model::MattingNet;

/// A training window loaded from disk.
struct Clip {
  std::vector<ImageFrame> frames;
  std::vector<AlphaMatte> alphas;
  std::vector<Trimap> trimaps;
};

/// Deterministic batch order: a fresh permutation of the active schedule
/// stage's train records every epoch, derived from (seed, epoch) only, so a
/// resumed run sees the same batches as an uninterrupted one.
class ClipSampler {
 public:
  ClipSampler(const DatasetManifest& m, int batch, std::uint64_t seed) : batch_(batch), seed_(seed) {
    for (const auto* r : select_split(m, Split::Train)) stages_[r->epoch_start].push_back(r);
    if (stages_.empty()) throw InvalidInput("manifest has no train records");
    for (auto& [e, recs] : stages_) {
      std::sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
    }
    if (stages_.begin()->first != 0) throw InvalidInput("manifest schedule has no stage starting at epoch 0");
    const auto n = static_cast<int>(stages_.begin()->second.size());
    steps_per_epoch_ = (n + batch - 1) / batch;
  }

  int steps_per_epoch() const { return steps_per_epoch_; }

  std::vector<const ManifestRecord*> batch(std::uint64_t step) const {
    const std::uint64_t epoch = step / steps_per_epoch_;
    const std::uint64_t pos = step % steps_per_epoch_;
    auto it = stages_.upper_bound(static_cast<int>(std::min<std::uint64_t>(epoch, INT32_MAX)));
    const auto& recs = std::prev(it)->second;
    std::vector<std::size_t> perm(recs.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = substream(seed_, "epoch/" + std::to_string(epoch));
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    std::vector<const ManifestRecord*> out;
    for (int j = 0; j < batch_; ++j) out.push_back(recs[perm[(pos * batch_ + j) % recs.size()]]);
    return out;
  }

 private:
  std::map<int, std::vector<const ManifestRecord*>> stages_;
  int batch_;
  std::uint64_t seed_;
  int steps_per_epoch_ = 1;
};

Clip load_window(const DatasetManifest& m, const ManifestRecord& r, int length, bool with_trimaps, Rng& rng) {
  ClipSample s = load_clip(m, r, with_trimaps);
  Clip c{std::move(s.frames), std::move(s.alphas), std::move(s.trimaps)};
  const int n = static_cast<int>(c.frames.size());
  if (length > 0 && length < n) {
    const int start = rng.uniform_int(0, n - length);
    auto cut = [&](auto& v) {
      if (v.empty()) return;
      v.erase(v.begin() + start + length, v.end());
      v.erase(v.begin(), v.begin() + start);
    };
    cut(c.frames);
    cut(c.alphas);
    cut(c.trimaps);
  }
  return c;
}

double lr_at(const TrainConfig& cfg, std::uint64_t step, std::uint64_t total) {
  if (cfg.lr_schedule == LrSchedule::Cosine && total > 0) {
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
  }
  return cfg.lr;
}

bool grads_finite(const MattingNet& net) {
  for (const auto& p : net.params()) {
    for (float g : p.var->grad.values()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

void scale_bundle(PredictionBundle& b, double s) {
  for (Field* f : {&b.alpha_mean, &b.alpha_logvar, &b.unc_mean, &b.unc_logvar}) {
    for (double& v : f->values()) v *= s;
  }
}

json train_config_json(const TrainConfig& cfg, int total_steps) {
  return {{"steps", total_steps},        {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size}, {"clip_length", cfg.clip_length},
          {"lr", cfg.lr},                {"lr_schedule", std::string(to_string(cfg.lr_schedule))},
          {"seed", cfg.seed},            {"checkpoint_every", cfg.checkpoint_every}};
}

/// Everything a stage contributes to the shared training loop.
struct StageSpec {
  std::string name;
  std::string final_name;
  json header;
  bool with_trimaps = true;
  MattingNet* net = nullptr;
  /// Forward + backward on one batch; returns the per-term means.
  std::function<std::map<std::string, double>(const std::vector<Clip>&)> compute;
  std::function<void()> after_update;
  std::function<void(Checkpoint&)> save_extra;
  std::function<void(const Checkpoint&)> restore_extra;
};

std::vector<std::string> read_kept_log(const std::filesystem::path& path, std::uint64_t before_step) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<std::uint64_t>() < before_step) kept.push_back(line);
  }
  return kept;
}

TrainResult run_loop(const TrainConfig& cfg, StageSpec& spec) {
  namespace fs = std::filesystem;
  if (auto e = cfg.validate(); !e.empty()) throw InvalidInput("invalid train config: " + e.front());
  DatasetManifest manifest = read_manifest(cfg.manifest);
  if (!spec.with_trimaps) {
    // Never read, so their files need not exist.
    for (auto& r : manifest.records) r.trimaps.clear();
  }
  if (auto e = validate_manifest(manifest); !e.empty()) throw InvalidInput("invalid manifest: " + e.front());
  if (spec.with_trimaps) {
    for (const auto* r : select_split(manifest, Split::Train)) {
      if (r->trimaps.empty()) throw InvalidInput("record " + r->sample_id + " has no trimaps (needed by stage 1)");
    }
  }
  const ClipSampler sampler(manifest, cfg.batch_size, cfg.seed);
  const auto total = static_cast<std::uint64_t>(cfg.steps > 0 ? cfg.steps : cfg.epochs * sampler.steps_per_epoch());

  MattingNet& net = *spec.net;
  Adam adam(net.params(), AdamConfig{cfg.lr});
  Rng window_rng = substream(cfg.seed, "train/window");
  std::uint64_t start = 0;
  fs::create_directories(cfg.out_dir);
  const fs::path log_path = cfg.out_dir / kTrainLog;
  std::vector<std::string> kept;
  if (!cfg.resume.empty()) {
    const Checkpoint c = load_checkpoint(cfg.resume);
    const json meta = json::parse(c.meta, nullptr, false);
    if (meta.is_discarded() || meta.value("stage", "") != spec.name) {
      throw InvalidInput("resume checkpoint was not written by stage '" + spec.name + "'");
    }
    if (c.model != net.config()) throw InvalidInput("resume checkpoint model config differs from this run");
    restore_params(net, c, kParamPrefix);
    adam.restore(c, net.params());
    if (spec.restore_extra) spec.restore_extra(c);
    window_rng.restore(c.rng_state);
    start = c.step;
    kept = read_kept_log(log_path, start);
  }

  json header = spec.header;
  header["stage"] = spec.name;
  header["train"] = train_config_json(cfg, static_cast<int>(total));
  header["model"] = {{"levels", net.config().levels}, {"width", net.config().width}, {"params", net.param_count()}};
  for (const auto& [k, v] : cfg.header_extra) header["extra"][k] = v;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log: " + log_path.string());
  log << json{{"header", header}}.dump() << '\n';
  for (const auto& l : kept) log << l << '\n';
  log.flush();

  auto snapshot = [&](std::uint64_t completed) {
    Checkpoint c;
    c.model = net.config();
    c.step = completed;
    c.rng_state = window_rng.state();
    json meta = spec.header;
    meta["stage"] = spec.name;
    meta["train"] = train_config_json(cfg, static_cast<int>(total));
    c.meta = meta.dump();
    append_params(c, net, kParamPrefix);
    adam.save(c, net.params());
    if (spec.save_extra) spec.save_extra(c);
    return c;
  };

  TrainResult result;
  result.log = log_path;
  fs::path last_good;
  const auto t0 = std::chrono::steady_clock::now();
  // State at the top of the most recent step whose loss was finite.
  std::optional<Checkpoint> good;
  for (std::uint64_t step = start; step < total; ++step) {
    Checkpoint pending = snapshot(step);
    std::vector<Clip> clips;
    for (const auto* r : sampler.batch(step)) {
      clips.push_back(load_window(manifest, *r, cfg.clip_length, spec.with_trimaps, window_rng));
    }
    net.zero_grad();
    const auto terms = spec.compute(clips);
    const double lr = lr_at(cfg, step, total);
    const bool loss_ok = std::all_of(terms.begin(), terms.end(), [](const auto& kv) { return std::isfinite(kv.second); });
    if (loss_ok) good = std::move(pending);
    if (!loss_ok || !grads_finite(net)) {
      std::string where = "no finite state was reached";
      if (good) {
        last_good = cfg.out_dir / (spec.name + "_last_good.ckpt");
        save_checkpoint(last_good, *good);
        where = "last good checkpoint (step " + std::to_string(good->step) + "): " + last_good.string();
      }
      throw TrainingAborted("non-finite " + std::string(loss_ok ? "gradient" : "loss") + " at step " +
                                std::to_string(step) + "; " + where,
                            last_good);
    }
    adam.step(net.params(), lr);
    if (spec.after_update) spec.after_update();

    StepLog entry{step, terms, lr};
    json rec = {{"step", step}, {"lr", lr},
                {"wall_time", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    for (const auto& [k, v] : terms) rec[k] = v;
    log << rec.dump() << '\n';
    log.flush();
    result.trail.push_back(std::move(entry));

    if (cfg.checkpoint_every > 0 && (step + 1) % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0 &&
        step + 1 < total) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_step%06llu.ckpt", spec.name.c_str(), static_cast<unsigned long long>(step + 1));
      last_good = cfg.out_dir / name;
      save_checkpoint(last_good, snapshot(step + 1));
    }
  }
  result.checkpoint = cfg.out_dir / spec.final_name;
  save_checkpoint(result.checkpoint, snapshot(total));
  return result;
}

}  // namespace

std::string_view to_string(Weighting w) {
  switch (w) {
    case Weighting::Linear: return "linear";
    case Weighting::Exponential: return "exp";
    case Weighting::Uniform: return "uniform";
  }
  return "?";
}

std::optional<Weighting> parse_weighting(std::string_view s) {
  if (s == "linear") return Weighting::Linear;
  if (s == "exp" || s == "exponential") return Weighting::Exponential;
  if (s == "uniform") return Weighting::Uniform;
  return std::nullopt;
}

std::string_view to_string(UncNormalization n) { return n == UncNormalization::Clamp01 ? "clamp01" : "none"; }

std::optional<UncNormalization> parse_normalization(std::string_view s) {
  if (s == "clamp01") return UncNormalization::Clamp01;
  if (s == "none") return UncNormalization::None;
  return std::nullopt;
}

std::string_view to_string(SigmaSource s) { return s == SigmaSource::UncMean ? "unc_mean" : "unc_logvar"; }

std::optional<SigmaSource> parse_sigma_source(std::string_view s) {
  if (s == "unc_mean") return SigmaSource::UncMean;
  if (s == "unc_logvar") return SigmaSource::UncLogvar;
  return std::nullopt;
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "cosine"; }

std::optional<LrSchedule> parse_lr_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  return std::nullopt;
}

std::vector<std::string> UGKDConfig::validate() const {
  std::vector<std::string> e;
  if (!(w1 > 0.0)) e.push_back("ugkd w1 must be > 0");
  if (!(w2 >= 0.0)) e.push_back("ugkd w2 must be >= 0");
  if (!std::isfinite(exp_w)) e.push_back("ugkd exp_w must be finite");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) e.push_back("ugkd ema_decay must be in (0,1)");
  return e;
}

Field ugkd_weight(const UncertaintyMap& sigma, const UGKDConfig& cfg) {
  Field w(sigma.height(), sigma.width());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double s = sigma[i];
    if (!(s >= 0.0)) throw InvalidInput("ugkd_weight: uncertainty must be non-negative and finite-or-inf, got " + std::to_string(s));
    const double n = cfg.normalization == UncNormalization::Clamp01 ? std::min(s, 1.0) : s;
    switch (cfg.weighting) {
      case Weighting::Linear: w[i] = cfg.w1 + cfg.w2 * n; break;
      case Weighting::Exponential: w[i] = std::exp(cfg.exp_w * n); break;
      case Weighting::Uniform: w[i] = cfg.w1; break;
    }
  }
  return w;
}

UncertaintyMap teacher_sigma(const PredictionBundle& teacher, const UGKDConfig& cfg) {
  if (cfg.sigma_source == SigmaSource::UncMean) {
    UncertaintyMap s = teacher.unc_mean;
    for (double& v : s.values()) v = std::max(v, 0.0);
    return s;
  }
  UncertaintyMap s(teacher.unc_logvar.height(), teacher.unc_logvar.width());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::exp(std::clamp(teacher.unc_logvar[i], losses::kLogvarMin, losses::kLogvarMax));
  }
  return s;
}

void ema_update(model::MattingNet& teacher, const model::MattingNet& student, double decay) {
  auto& tp = teacher.params();
  const auto& sp = student.params();
  if (tp.size() != sp.size()) throw InvalidInput("ema_update: networks differ in parameter count");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].name != sp[i].name || !tp[i].var->value.same_shape(sp[i].var->value)) {
      throw InvalidInput("ema_update: parameter '" + tp[i].name + "' does not match the student");
    }
  }
  for (std::size_t i = 0; i < tp.size(); ++i) {
    ema_update<float>(tp[i].var->value.values(), sp[i].var->value.values(), decay);
  }
}

Adam::Adam(const std::vector<model::NamedParam>& params, const AdamConfig& cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    const auto& v = p.var->value;
    m_.emplace_back(v.channels(), v.height(), v.width());
    v_.emplace_back(v.channels(), v.height(), v.width());
  }
}

void Adam::step(std::vector<model::NamedParam>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Tensor& w = params[k].var->value;
    const nn::Tensor& g = params[k].var->grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double m = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * gi;
      const double v = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * gi * gi;
      m_[k][i] = static_cast<float>(m);
      v_[k][i] = static_cast<float>(v);
      w[i] = static_cast<float>(w[i] - lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps));
    }
  }
}

void Adam::save(Checkpoint& c, const std::vector<model::NamedParam>& params) const {
  for (std::size_t k = 0; k < params.size(); ++k) {
    c.blobs.emplace_back(kAdamMPrefix + params[k].name, m_[k]);
    c.blobs.emplace_back(kAdamVPrefix + params[k].name, v_[k]);
  }
  nn::Tensor t(1, 1, 2);
  // Step count split so each half is exact in float32.
  t[0] = static_cast<float>(t_ & 0xffff);
  t[1] = static_cast<float>(t_ >> 16);
  c.blobs.emplace_back("adam.t", t);
}

void Adam::restore(const Checkpoint& c, const std::vector<model::NamedParam>& params) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const nn::Tensor* m = c.find(kAdamMPrefix + params[k].name);
    const nn::Tensor* v = c.find(kAdamVPrefix + params[k].name);
    if (!m || !v || !m->same_shape(m_[k]) || !v->same_shape(v_[k])) {
      throw CheckpointError("checkpoint lacks optimizer state for '" + params[k].name + "'");
    }
    m_[k] = *m;
    v_[k] = *v;
  }
  const nn::Tensor* t = c.find("adam.t");
  if (!t || t->size() != 2) throw CheckpointError("checkpoint lacks optimizer step count");
  t_ = static_cast<std::uint64_t>((*t)[0]) | (static_cast<std::uint64_t>((*t)[1]) << 16);
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> e;
  if (manifest.empty()) e.push_back("train manifest path is required");
  if (out_dir.empty()) e.push_back("train output directory is required");
  if (steps < 0 || epochs < 0) e.push_back("steps and epochs must be >= 0");
  if (steps == 0 && epochs == 0) e.push_back("one of steps or epochs must be > 0");
  if (batch_size < 1) e.push_back("batch_size must be >= 1");
  if (clip_length < 0) e.push_back("clip_length must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) e.push_back("lr must be a positive finite number");
  if (checkpoint_every < 0) e.push_back("checkpoint_every must be >= 0");
  return e;
}

double grad_norm_sq(const model::MattingNet& net) {
  double s = 0.0;
  for (const auto& p : net.params()) {
    for (float g : p.var->grad.values()) s += static_cast<double>(g) * g;
  }
  return s;
}

double mean_stage1_loss(const model::MattingNet& net, const DatasetManifest& m, Split split,
                        const losses::Stage1Weights& w) {
  const auto records = select_split(m, split);
  if (records.empty()) throw InvalidInput("mean_stage1_loss: empty split");
  double sum = 0.0;
  for (const auto* r : records) {
    const ClipSample c = load_clip(m, *r, w.use_trimap);
    const auto pred = net.forward(c.frames).first;
    sum += losses::stage1_loss(pred, c.alphas, c.trimaps, w, nullptr).total;
  }
  return sum / static_cast<double>(records.size());
}

TrainResult train_stage1(const TrainConfig& cfg, const model::ModelConfig& mcfg, const losses::Stage1Weights& w) {
  MattingNet net(mcfg, cfg.seed);
  StageSpec spec;
  spec.name = "teacher";
  spec.final_name = kTeacherCheckpoint;
  spec.with_trimaps = w.use_trimap;
  spec.net = &net;
  spec.header = {{"loss", {{"beta", w.beta},
                           {"l1", w.l1},
                           {"lap", w.lap},
                           {"tc", w.tc},
                           {"nll_u", w.nll_u},
                           {"nll_alpha", w.nll_alpha},
                           {"lap_levels", w.lap_levels},
                           {"use_trimap", w.use_trimap},
                           {"unc_target", w.unc_target == losses::UncertaintyTarget::Residual ? "residual" : "alpha"}}}};
  spec.compute = [&](const std::vector<Clip>& clips) {
    std::map<std::string, double> terms{{"total", 0.0}, {"l1", 0.0}, {"lap", 0.0}, {"tc", 0.0}, {"nll_u", 0.0}, {"nll_alpha", 0.0}};
    const double inv = 1.0 / static_cast<double>(clips.size());
    for (const auto& c : clips) {
      const model::Trace tr = net.forward_graph(c.frames);
      std::vector<PredictionBundle> pred;
      for (std::size_t t = 0; t < tr.length(); ++t) pred.push_back(tr.bundle(t));
      std::vector<PredictionBundle> grads;
      const auto b = losses::stage1_loss(pred, c.alphas, c.trimaps, w, &grads);
      for (auto& g : grads) scale_bundle(g, inv);
      net.backward(tr, grads);
      terms["total"] += b.total * inv;
      terms["l1"] += b.l1 * inv;
      terms["lap"] += b.lap * inv;
      terms["tc"] += b.tc * inv;
      terms["nll_u"] += b.nll_u * inv;
      terms["nll_alpha"] += b.nll_alpha * inv;
    }
    return terms;
  };
  return run_loop(cfg, spec);
}

TrainResult train_stage2(const std::filesystem::path& teacher_ckpt, const TrainConfig& cfg, const UGKDConfig& ugkd,
                         int lap_levels, const std::optional<model::ModelConfig>& student_model) {
  if (auto e = ugkd.validate(); !e.empty()) throw InvalidInput("invalid ugkd config: " + e.front());
  const Checkpoint tc = load_checkpoint(teacher_ckpt);
  if (student_model && *student_model != tc.model) {
    throw InvalidInput("student model config does not match the teacher checkpoint (levels/width/heads differ)");
  }
  MattingNet teacher = model_from_checkpoint(tc);
  MattingNet student = model_from_checkpoint(tc);
  const bool need_teacher = ugkd.weighting != Weighting::Uniform;

  StageSpec spec;
  spec.name = "student";
  spec.final_name = kStudentCheckpoint;
  spec.with_trimaps = false;
  spec.net = &student;
  spec.header = {{"teacher_step", tc.step},
                 {"lap_levels", lap_levels},
                 {"ugkd",
                  {{"w1", ugkd.w1},
                   {"w2", ugkd.w2},
                   {"weighting", std::string(to_string(ugkd.weighting))},
                   {"exp_w", ugkd.exp_w},
                   {"ema_decay", ugkd.ema_decay},
                   {"ema_enabled", ugkd.ema_enabled},
                   {"normalization", std::string(to_string(ugkd.normalization))},
                   {"sigma_source", std::string(to_string(ugkd.sigma_source))}}}};
  spec.compute = [&](const std::vector<Clip>& clips) {
    std::map<std::string, double> terms{{"total", 0.0}, {"soft_l1", 0.0}, {"lap", 0.0}, {"w_mean", 0.0}};
    const double inv = 1.0 / static_cast<double>(clips.size());
    for (const auto& c : clips) {
      std::vector<Field> weights;
      if (need_teacher) {
        const auto [tb, state] = teacher.forward(c.frames);
        for (const auto& b : tb) weights.push_back(ugkd_weight(teacher_sigma(b, ugkd), ugkd));
      } else {
        for (const auto& a : c.alphas) weights.push_back(ugkd_weight(Field(a.height(), a.width(), 0.0), ugkd));
      }
      const model::Trace tr = student.forward_graph(c.frames);
      std::vector<Field> alpha;
      for (std::size_t t = 0; t < tr.length(); ++t) alpha.push_back(model::plane_to_field(tr.heads[t][model::kAlphaMean]->value));
      std::vector<Field> grads;
      const auto b = losses::stage2_loss(alpha, c.alphas, weights, lap_levels, &grads);
      std::vector<PredictionBundle> head_grads;
      for (auto& g : grads) {
        for (double& v : g.values()) v *= inv;
        head_grads.push_back({std::move(g), Field(), Field(), Field()});
      }
      student.backward(tr, head_grads);
      double wsum = 0.0;
      std::size_t wn = 0;
      for (const auto& w : weights) {
        for (double v : w.values()) wsum += v;
        wn += w.size();
      }
      terms["total"] += b.total * inv;
      terms["soft_l1"] += b.soft_l1 * inv;
      terms["lap"] += b.lap * inv;
      terms["w_mean"] += wsum / static_cast<double>(wn) * inv;
    }
    terms["teacher_grad_norm"] = std::sqrt(grad_norm_sq(teacher));
    return terms;
  };
  spec.after_update = [&] {
    if (ugkd.ema_enabled) ema_update(teacher, student, ugkd.ema_decay);
  };
  spec.save_extra = [&](Checkpoint& c) { append_params(c, teacher, kTeacherPrefix); };
  spec.restore_extra = [&](const Checkpoint& c) { restore_params(teacher, c, kTeacherPrefix); };
  return run_loop(cfg, spec);
}

}  // namespace facemat::distill
