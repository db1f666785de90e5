#include "facemat/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "facemat/apply/apply.hpp"
#include "facemat/core/raster_io.hpp"
#include "facemat/core/rng.hpp"
#include "facemat/distill/distill.hpp"
#include "facemat/metrics/metrics.hpp"
#include "facemat/synth/config.hpp"
#include "facemat/synth/dataset.hpp"
#include "facemat/synth/generators.hpp"

namespace facemat::cli {
namespace {

namespace fs = std::filesystem;

struct Resolved {
  std::string value;
  Source source = Source::Default;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string dashed(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

/// A subcommand: its home section (keys exposed as --key) and the other
/// sections it reads (exposed as --section-key).
struct Command {
  std::string name;
  std::string description;
  std::string home;
  std::vector<std::string> others;

  std::vector<std::string> sections() const {
    std::vector<std::string> s{home};
    s.insert(s.end(), others.begin(), others.end());
    s.push_back("run");
    return s;
  }
  std::string flag(const KeySpec& k) const {
    if (k.section == home || k.section == "run") return "--" + dashed(k.name);
    return "--" + k.section + "-" + dashed(k.name);
  }
};

const std::vector<Command>& commands() {
  static const std::vector<Command> c{
      {"synth", "Synthesize an occluded-face clip dataset and its manifest", "synth", {}},
      {"gen-faces", "Write procedural face images and their skin masks", "faces", {}},
      {"train-teacher", "Stage 1: train the teacher with alpha and uncertainty heads", "train", {"model", "loss"}},
      {"train-student", "Stage 2: distill a student under the teacher's uncertainty", "train", {"ugkd", "loss"}},
      {"eval", "Score a checkpoint on a manifest split and write a report", "eval", {}},
      {"apply-filter", "Matte a frame directory and composite a face filter", "apply", {}},
  };
  return c;
}

/// Typed access to resolved values; conversion failures are collected.
class Values {
 public:
  explicit Values(std::map<std::string, Resolved> v) : v_(std::move(v)) {}

  const std::string& str(const std::string& key) const { return v_.at(key).value; }
  Source source(const std::string& key) const { return v_.at(key).source; }

  double real(const std::string& key) {
    return convert<double>(key, "a number", [](const std::string& s, std::size_t& used) { return std::stod(s, &used); });
  }
  int integer(const std::string& key) {
    return convert<int>(key, "an integer", [](const std::string& s, std::size_t& used) { return std::stoi(s, &used); });
  }
  std::uint64_t u64(const std::string& key) {
    const std::string& s = str(key);
    if (!s.empty() && s[0] == '-') {
      fail(key, "a non-negative integer");
      return 0;
    }
    return convert<std::uint64_t>(key, "a non-negative integer",
                                  [](const std::string& t, std::size_t& used) { return std::stoull(t, &used); });
  }
  bool boolean(const std::string& key) {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    fail(key, "true or false");
    return false;
  }
  template <class E, class P>
  E choice(const std::string& key, P parse, const char* expected, E fallback) {
    if (auto e = parse(str(key))) return *e;
    fail(key, expected);
    return fallback;
  }
  /// Required non-empty path.
  fs::path path(const std::string& key, const std::string& flag) {
    if (str(key).empty()) errors.push_back(key + " is required (" + flag + ")");
    return str(key);
  }
  void fail(const std::string& key, const std::string& expected) {
    errors.push_back(key + " = '" + str(key) + "' (" + std::string(to_string(source(key))) + "): expected " + expected);
  }

  const std::map<std::string, Resolved>& all() const { return v_; }
  std::vector<std::string> errors;

 private:
  template <class T, class F>
  T convert(const std::string& key, const char* expected, F f) {
    const std::string& s = str(key);
    std::size_t used = 0;
    try {
      T v = f(s, used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(key, expected);
    return T{};
  }

  std::map<std::string, Resolved> v_;
};

std::string key_help(const Command& cmd) {
  std::ostringstream o;
  o << "\nConfig keys ([section] key in the config file, then flag, then default):\n";
  for (const auto& section : cmd.sections()) {
    for (const auto& k : key_table()) {
      if (k.section != section) continue;
      char line[256];
      std::snprintf(line, sizeof line, "  %-28s %-30s default: %s\n", (k.section + "." + k.name).c_str(),
                    cmd.flag(k).c_str(), k.default_value.empty() ? "(none)" : k.default_value.c_str());
      o << line << "      " << k.help << "\n";
    }
  }
  o << "\nPrecedence: a flag overrides the config file, which overrides the default.\n"
       "The config file is --config PATH; a relative PATH missing from the working\n"
       "directory is looked up in $"
    << kConfigDirEnv << ". Without --config, $" << kConfigDirEnv << "/" << kDefaultConfigFile
    << "\nis read when it exists. --show-config prints every value with its source.\n"
       "Exit codes: 0 success, 1 usage or config error, 2 runtime failure.\n";
  return o.str();
}

int config_errors(const std::vector<std::string>& errors, std::ostream& err) {
  err << "configuration errors (" << errors.size() << "):\n";
  for (const auto& e : errors) err << "  - " << e << "\n";
  return kExitUsage;
}

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

int workers_value(Values& v) {
  if (v.str("run.workers").empty()) return static_cast<int>(default_workers());
  const int w = v.integer("run.workers");
  if (w < 1) v.errors.push_back("run.workers must be >= 1");
  return w;
}

std::map<std::string, std::string> provenance(const Values& v) {
  std::map<std::string, std::string> out;
  for (const auto& [k, r] : v.all()) out["config." + k] = r.value + " (" + std::string(to_string(r.source)) + ")";
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_synth(Values& v, std::ostream& out, std::ostream& err) {
  synth::SynthConfig c;
  const fs::path dir = v.path("synth.out", "--out");
  c.n = v.integer("synth.n");
  c.size = v.integer("synth.size");
  c.occlusion_ratio = v.real("synth.ratio");
  try {
    c.ratio_schedule = synth::parse_ratio_schedule(v.str("synth.ratio_schedule"));
  } catch (const std::exception& e) {
    v.errors.push_back(std::string("synth.ratio_schedule: ") + e.what());
  }
  c.test_fraction = v.real("synth.test_fraction");
  c.clip_length = v.integer("synth.clip_length");
  c.sources.clear();
  for (const auto& s : split_list(v.str("synth.sources"))) {
    if (auto src = parse_occlusion_source(s); src && *src != OcclusionSource::None) {
      c.sources.push_back(*src);
    } else {
      v.errors.push_back("synth.sources: unknown source '" + s + "' (matte, hard_mask, random_shape, texture)");
    }
  }
  c.asset_dir = v.str("synth.assets");
  c.builtin_assets = v.boolean("synth.builtin_assets");
  c.scale_min = v.real("synth.scale_min");
  c.scale_max = v.real("synth.scale_max");
  c.rotation_deg = v.real("synth.rotation_deg");
  c.flip_prob = v.real("synth.flip_prob");
  c.jitter_brightness = v.real("synth.jitter_brightness");
  c.jitter_contrast = v.real("synth.jitter_contrast");
  c.jitter_saturation = v.real("synth.jitter_saturation");
  c.min_area = v.real("synth.min_area");
  c.max_area = v.real("synth.max_area");
  c.pause_prob = v.real("synth.pause_prob");
  c.motion_rate = v.real("synth.motion_rate");
  c.motion_translate = v.real("synth.motion_translate");
  c.motion_rotate_deg = v.real("synth.motion_rotate_deg");
  c.motion_scale = v.real("synth.motion_scale");
  c.erode_r = v.integer("synth.erode_r");
  c.dilate_r = v.integer("synth.dilate_r");
  c.blur_sigma = v.real("synth.blur_sigma");
  c.write_layers = v.boolean("synth.write_layers");
  c.seed = v.u64("run.seed");
  c.workers = workers_value(v);
  for (auto& e : c.validate()) v.errors.push_back(std::move(e));
  if (!v.errors.empty()) return config_errors(v.errors, err);

  synth::SynthSummary s;
  synth::synth_dataset(c, dir, &s);
  out << "manifest: " << (dir / "manifest.jsonl").string() << "\n";
  out << "clips: " << s.train + s.test << " (train " << s.train << ", test " << s.test << ")\n";
  out << "occluded: " << s.occluded << "\n";
  for (const auto& [src, n] : s.per_source) out << "  " << src << ": " << n << "\n";
  return kExitOk;
}

int cmd_gen_faces(Values& v, std::ostream& out, std::ostream& err) {
  const fs::path dir = v.path("faces.out", "--out");
  const int n = v.integer("faces.n");
  const int size = v.integer("faces.size");
  const std::uint64_t seed = v.u64("run.seed");
  if (n < 1) v.errors.push_back("faces.n must be >= 1");
  if (size < 16) v.errors.push_back("faces.size must be >= 16");
  if (!v.errors.empty()) return config_errors(v.errors, err);
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, "face/" + std::to_string(i));
    const auto f = synth::gen_procedural_face(rng, size);
    char name[32];
    std::snprintf(name, sizeof name, "face_%04d", i);
    save_image(dir / (std::string(name) + ".png"), f.image);
    save_matte(dir / (std::string(name) + "_skin.png"), f.skin);
  }
  out << "wrote " << n << " faces to " << dir.string() << "\n";
  return kExitOk;
}

distill::TrainConfig train_config(Values& v) {
  distill::TrainConfig t;
  t.manifest = v.path("train.manifest", "--manifest");
  t.out_dir = v.path("train.out", "--out");
  t.steps = v.integer("train.steps");
  t.epochs = v.integer("train.epochs");
  t.batch_size = v.integer("train.batch_size");
  t.clip_length = v.integer("train.clip_length");
  t.lr = v.real("train.lr");
  t.lr_schedule = v.choice("train.lr_schedule", distill::parse_lr_schedule, "constant or cosine",
                           distill::LrSchedule::Constant);
  t.checkpoint_every = v.integer("train.checkpoint_every");
  t.resume = v.str("train.resume");
  t.seed = v.u64("run.seed");
  workers_value(v);
  for (auto& e : t.validate()) {
    if (e.find("required") == std::string::npos) v.errors.push_back("train: " + e);
  }
  return t;
}

losses::Stage1Weights loss_weights(Values& v) {
  losses::Stage1Weights w;
  w.beta = v.real("loss.beta");
  w.l1 = v.real("loss.l1");
  w.lap = v.real("loss.lap");
  w.tc = v.real("loss.tc");
  w.nll_u = v.real("loss.nll_u");
  w.nll_alpha = v.real("loss.nll_alpha");
  w.lap_levels = v.integer("loss.lap_levels");
  w.use_trimap = v.boolean("loss.use_trimap");
  w.unc_target = v.choice(
      "loss.unc_target",
      [](std::string_view s) -> std::optional<losses::UncertaintyTarget> {
        if (s == "residual") return losses::UncertaintyTarget::Residual;
        if (s == "alpha") return losses::UncertaintyTarget::Alpha;
        return std::nullopt;
      },
      "residual or alpha", losses::UncertaintyTarget::Residual);
  if (!(w.beta >= 0.0 && w.beta <= 1.0)) v.errors.push_back("loss.beta must lie in [0,1]");
  for (double x : {w.l1, w.lap, w.tc, w.nll_u, w.nll_alpha}) {
    if (!(x >= 0.0)) {
      v.errors.push_back("loss weights must be >= 0");
      break;
    }
  }
  if (w.lap_levels < 1) v.errors.push_back("loss.lap_levels must be >= 1");
  return w;
}

int report_training(const distill::TrainResult& r, std::ostream& out) {
  out << "checkpoint: " << r.checkpoint.string() << "\n";
  out << "log: " << r.log.string() << "\n";
  if (!r.trail.empty()) out << "final total loss: " << r.trail.back().terms.at("total") << "\n";
  return kExitOk;
}

int cmd_train_teacher(Values& v, std::ostream& out, std::ostream& err) {
  distill::TrainConfig t = train_config(v);
  const auto w = loss_weights(v);
  model::ModelConfig m;
  m.levels = v.integer("model.levels");
  m.width = v.integer("model.width");
  m.heads = {false, false, false, false};
  for (const auto& h : split_list(v.str("model.heads"))) {
    static const std::map<std::string, int> names{
        {"alpha_mean", 0}, {"alpha_logvar", 1}, {"unc_mean", 2}, {"unc_logvar", 3}};
    if (auto it = names.find(h); it != names.end()) {
      m.heads[it->second] = true;
    } else {
      v.errors.push_back("model.heads: unknown head '" + h + "'");
    }
  }
  for (auto& e : m.validate()) v.errors.push_back("model: " + e);
  if (!v.errors.empty()) return config_errors(v.errors, err);
  t.header_extra = provenance(v);
  return report_training(distill::train_stage1(t, m, w), out);
}

int cmd_train_student(Values& v, std::ostream& out, std::ostream& err) {
  const fs::path teacher = v.str("train.teacher");
  if (teacher.empty()) {
    err << "train-student requires --teacher <checkpoint>\n";
    return kExitUsage;
  }
  if (!fs::exists(teacher)) {
    err << "--teacher: checkpoint not found: " << teacher.string() << "\n";
    return kExitUsage;
  }
  distill::TrainConfig t = train_config(v);
  distill::UGKDConfig u;
  u.w1 = v.real("ugkd.w1");
  u.w2 = v.real("ugkd.w2");
  u.weighting = v.choice("ugkd.weighting", distill::parse_weighting, "linear, exp or uniform", distill::Weighting::Linear);
  u.exp_w = v.real("ugkd.exp_w");
  u.ema_decay = v.real("ugkd.ema_decay");
  u.ema_enabled = v.boolean("ugkd.ema");
  u.normalization = v.choice("ugkd.normalization", distill::parse_normalization, "clamp01 or none",
                             distill::UncNormalization::Clamp01);
  u.sigma_source = v.choice("ugkd.sigma_source", distill::parse_sigma_source, "unc_mean or unc_logvar",
                            distill::SigmaSource::UncMean);
  for (auto& e : u.validate()) v.errors.push_back(std::move(e));
  const int lap_levels = v.integer("loss.lap_levels");
  if (lap_levels < 1) v.errors.push_back("loss.lap_levels must be >= 1");
  if (!v.errors.empty()) return config_errors(v.errors, err);
  t.header_extra = provenance(v);
  return report_training(distill::train_stage2(teacher, t, u, lap_levels), out);
}

int cmd_eval(Values& v, std::ostream& out, std::ostream& err) {
  metrics::EvalConfig c;
  c.oracle = v.boolean("eval.oracle");
  const fs::path ckpt = v.str("eval.checkpoint");
  if (!c.oracle && ckpt.empty()) v.errors.push_back("eval.checkpoint is required (--checkpoint) unless --oracle true");
  const fs::path manifest = v.path("eval.manifest", "--manifest");
  c.split = v.choice("eval.split", parse_split, "train or test", Split::Test);
  const fs::path report = v.path("eval.report", "--report");
  c.metric.grad_sigma = v.real("eval.grad_sigma");
  c.metric.conn_step = v.real("eval.conn_step");
  c.metric.threshold = v.real("eval.threshold");
  if (!(c.metric.grad_sigma > 0.0)) v.errors.push_back("eval.grad_sigma must be > 0");
  if (!(c.metric.conn_step > 0.0 && c.metric.conn_step <= 1.0)) v.errors.push_back("eval.conn_step must lie in (0,1]");
  if (!(c.metric.threshold >= 0.0 && c.metric.threshold <= 1.0)) v.errors.push_back("eval.threshold must lie in [0,1]");
  c.workers = workers_value(v);
  if (!v.errors.empty()) return config_errors(v.errors, err);

  const auto rep = metrics::evaluate(ckpt, manifest, c);
  metrics::write_report(rep, report);
  out << metrics::summary_row(rep.aggregate);
  auto txt = report;
  txt += ".txt";
  out << "report: " << txt.string() << "\n";
  if (rep.failed > 0) {
    err << rep.failed << " of " << rep.samples.size() << " samples failed:\n";
    for (const auto& s : rep.samples) {
      if (!s.ok) err << "  " << s.sample_id << ": " << s.error << "\n";
    }
  }
  return rep.evaluated == 0 ? kExitRuntime : kExitOk;
}

int cmd_apply(Values& v, std::ostream& out, std::ostream& err) {
  const fs::path frames = v.path("apply.frames", "--frames");
  const fs::path ckpt = v.path("apply.checkpoint", "--checkpoint");
  const fs::path dir = v.path("apply.out", "--out");
  apply::FilterSpec spec;
  try {
    spec = apply::parse_filter(v.str("apply.filter"));
  } catch (const std::exception& e) {
    v.errors.push_back(std::string("apply.filter: ") + e.what());
  }
  workers_value(v);
  if (!v.errors.empty()) return config_errors(v.errors, err);
  const auto r = apply::run_pipeline(frames, ckpt, spec, dir);
  for (const auto& n : r.notices) out << "note: " << n << "\n";
  out << "wrote " << r.frames << " frames to " << (dir / apply::kFramesDir).string() << "\n";
  out << "mattes: " << (dir / apply::kMattesDir).string() << "\n";
  return kExitOk;
}

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::Default: return "default";
    case Source::File: return "file";
    case Source::Flag: return "flag";
  }
  return "?";
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> keys{
      {"run", "seed", "0", "Master seed; equal seeds give byte-identical artifacts"},
      {"run", "workers", "", "Worker threads for synth and eval (default: all cores); training uses one"},

      {"synth", "out", "", "Output directory (created if missing)"},
      {"synth", "n", "32", "Number of clips"},
      {"synth", "size", "128", "Square frame side in pixels"},
      {"synth", "ratio", "0.25", "Fraction of clips carrying an occluder"},
      {"synth", "ratio_schedule", "fixed", "'fixed' or epoch:ratio,epoch:ratio,..."},
      {"synth", "test_fraction", "0", "Fraction of clips assigned to the test split"},
      {"synth", "clip_length", "8", "Frames per clip"},
      {"synth", "sources", "random_shape,texture,hard_mask,matte", "Enabled occluder sources"},
      {"synth", "assets", "", "Directory of occluder assets (one subdirectory per source)"},
      {"synth", "builtin_assets", "true", "Use procedural occluders for sources without files"},
      {"synth", "scale_min", "0.6", "Minimum occluder scale"},
      {"synth", "scale_max", "1.0", "Maximum occluder scale"},
      {"synth", "rotation_deg", "30", "Occluder rotation range (+/- degrees)"},
      {"synth", "flip_prob", "0.5", "Occluder horizontal flip probability"},
      {"synth", "jitter_brightness", "0.15", "Occluder brightness jitter"},
      {"synth", "jitter_contrast", "0.15", "Occluder contrast jitter"},
      {"synth", "jitter_saturation", "0.15", "Occluder saturation jitter"},
      {"synth", "min_area", "0.05", "Minimum occluder area fraction"},
      {"synth", "max_area", "0.5", "Maximum occluder area fraction"},
      {"synth", "pause_prob", "0.1", "Probability that a clip holds still"},
      {"synth", "motion_rate", "0.25", "Motion magnitude per frame step"},
      {"synth", "motion_translate", "0.06", "Translation range as a fraction of the side"},
      {"synth", "motion_rotate_deg", "8", "Rotation range of the clip motion"},
      {"synth", "motion_scale", "0.06", "Scale range of the clip motion"},
      {"synth", "erode_r", "5", "Trimap erosion radius"},
      {"synth", "dilate_r", "5", "Trimap dilation radius"},
      {"synth", "blur_sigma", "2", "Edge blur for hard-mask occluders"},
      {"synth", "write_layers", "false", "Also write face and occluder layers"},

      {"faces", "out", "", "Output directory"},
      {"faces", "n", "8", "Number of faces"},
      {"faces", "size", "128", "Square image side"},

      {"train", "manifest", "", "Training manifest (manifest.jsonl)"},
      {"train", "out", "", "Output directory for checkpoints and the log"},
      {"train", "steps", "300", "Optimizer steps; 0 trains for --epochs instead"},
      {"train", "epochs", "0", "Epochs when --steps is 0"},
      {"train", "batch_size", "1", "Clips per step"},
      {"train", "clip_length", "0", "Frames per training window (0: whole clip)"},
      {"train", "lr", "1e-4", "Adam learning rate"},
      {"train", "lr_schedule", "constant", "constant or cosine"},
      {"train", "checkpoint_every", "0", "Intermediate checkpoint cadence in steps (0: final only)"},
      {"train", "resume", "", "Checkpoint to resume from"},
      {"train", "teacher", "", "Stage-1 checkpoint (train-student only, required)"},

      {"model", "levels", "4", "Encoder/decoder levels"},
      {"model", "width", "16", "Channel width unit"},
      {"model", "heads", "alpha_mean,alpha_logvar,unc_mean,unc_logvar", "Enabled output heads"},

      {"loss", "beta", "0.5", "beta-NLL exponent"},
      {"loss", "l1", "1", "Weight of the masked L1 term"},
      {"loss", "lap", "1", "Weight of the Laplacian pyramid term"},
      {"loss", "tc", "1", "Weight of the temporal consistency term"},
      {"loss", "nll_u", "1", "Weight of the uncertainty-head NLL"},
      {"loss", "nll_alpha", "1", "Weight of the alpha-head NLL"},
      {"loss", "lap_levels", "5", "Laplacian pyramid levels"},
      {"loss", "use_trimap", "true", "Mask stage-1 losses with the trimap"},
      {"loss", "unc_target", "residual", "Uncertainty head target: residual or alpha"},

      {"ugkd", "w1", "2", "Base distillation weight"},
      {"ugkd", "w2", "2", "Uncertainty gain of the linear weighting"},
      {"ugkd", "weighting", "linear", "linear, exp or uniform"},
      {"ugkd", "exp_w", "2", "Exponent scale of the exp weighting"},
      {"ugkd", "ema_decay", "0.97", "Teacher EMA decay"},
      {"ugkd", "ema", "true", "Update the teacher by EMA of the student"},
      {"ugkd", "normalization", "clamp01", "clamp01 or none"},
      {"ugkd", "sigma_source", "unc_mean", "unc_mean or unc_logvar"},

      {"eval", "checkpoint", "", "Checkpoint to evaluate"},
      {"eval", "manifest", "", "Dataset manifest"},
      {"eval", "split", "test", "train or test"},
      {"eval", "oracle", "false", "Score the ground truth instead of a model"},
      {"eval", "report", "eval_report", "Report base path (.txt and .json are written)"},
      {"eval", "grad_sigma", "1.4", "Gaussian-derivative scale of the Grad metric"},
      {"eval", "conn_step", "0.1", "Threshold step of the Conn metric"},
      {"eval", "threshold", "0.5", "Binarization threshold for IoU/accuracy/recall"},

      {"apply", "frames", "", "Directory of input frames (.png)"},
      {"apply", "checkpoint", "", "Matting checkpoint"},
      {"apply", "out", "", "Output directory"},
      {"apply", "filter", "hue:0", "hue:DEG, tint:R,G,B,OPACITY or external:DIR"},
  };
  return keys;
}

IniData parse_ini(std::istream& in, std::vector<std::string>& errors) {
  IniData d;
  std::string section, line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("config line " + std::to_string(no) + ": unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      d[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("config line " + std::to_string(no) + ": expected key = value");
      continue;
    }
    if (section.empty()) {
      errors.push_back("config line " + std::to_string(no) + ": key outside a [section]");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      errors.push_back("config line " + std::to_string(no) + ": empty key");
      continue;
    }
    d[section][key] = trim(line.substr(eq + 1));
  }
  return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"facemat: synthetic face-matting lab (synthesis, two-stage training, evaluation, filters)"};
  app.require_subcommand(1);
  app.footer("\nRun 'facemat <command> --help' for the config keys of a command.\n"
             "Exit codes: 0 success, 1 usage or config error, 2 runtime failure.\n"
             "$" + std::string(kConfigDirEnv) + " overrides the config directory.");

  struct Bound {
    const Command* cmd;
    CLI::App* app;
    std::map<std::string, std::pair<std::string, CLI::Option*>> flags;
    std::string config;
    bool show = false;
  };
  std::vector<Bound> bound;
  bound.reserve(commands().size());
  for (const auto& cmd : commands()) {
    Bound& b = bound.emplace_back();
    b.cmd = &cmd;
    b.app = app.add_subcommand(cmd.name, cmd.description);
    b.app->footer(key_help(cmd));
    b.app->add_option("--config", b.config, "INI config file");
    b.app->add_flag("--show-config", b.show, "Print the resolved configuration and exit");
    for (const auto& section : cmd.sections()) {
      for (const auto& k : key_table()) {
        if (k.section != section) continue;
        auto& slot = b.flags[k.section + "." + k.name];
        slot.second = b.app->add_option(cmd.flag(k), slot.first, k.help);
      }
    }
  }

  std::vector<const char*> argv{"facemat"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Bound* active = nullptr;
  for (auto& b : bound) {
    if (b.app->parsed()) active = &b;
  }
  const Command& cmd = *active->cmd;

  std::vector<std::string> errors;
  std::optional<fs::path> config_path;
  const char* env_dir = std::getenv(kConfigDirEnv);
  if (!active->config.empty()) {
    fs::path p = active->config;
    if (p.is_relative() && !fs::exists(p) && env_dir && fs::exists(fs::path(env_dir) / p)) p = fs::path(env_dir) / p;
    if (!fs::exists(p)) return config_errors({"--config: file not found: " + active->config}, err);
    config_path = p;
  } else if (env_dir && fs::exists(fs::path(env_dir) / kDefaultConfigFile)) {
    config_path = fs::path(env_dir) / kDefaultConfigFile;
  }
  IniData ini;
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) return config_errors({"cannot read config file " + config_path->string()}, err);
    ini = parse_ini(in, errors);
    for (const auto& [section, kv] : ini) {
      const bool known_section =
          std::any_of(key_table().begin(), key_table().end(), [&](const KeySpec& k) { return k.section == section; });
      if (!known_section) {
        errors.push_back(config_path->string() + ": unknown section [" + section + "]");
        continue;
      }
      for (const auto& [key, value] : kv) {
        const bool known = std::any_of(key_table().begin(), key_table().end(),
                                       [&](const KeySpec& k) { return k.section == section && k.name == key; });
        if (!known) errors.push_back(config_path->string() + ": unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  std::map<std::string, Resolved> resolved;
  for (const auto& [key, slot] : active->flags) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
    Resolved r;
    const auto& spec = *std::find_if(key_table().begin(), key_table().end(),
                                     [&](const KeySpec& k) { return k.section == section && k.name == name; });
    r.value = spec.default_value;
    if (auto s = ini.find(section); s != ini.end()) {
      if (auto kv = s->second.find(name); kv != s->second.end()) {
        r.value = kv->second;
        r.source = Source::File;
      }
    }
    if (slot.second->count() > 0) {
      r.value = slot.first;
      r.source = Source::Flag;
    }
    resolved[key] = r;
  }

  Values values(std::move(resolved));
  values.errors = std::move(errors);
  if (active->show) {
    if (config_path) out << "# config file: " << config_path->string() << "\n";
    for (const auto& [k, r] : values.all()) out << k << " = " << r.value << "  [" << to_string(r.source) << "]\n";
    return values.errors.empty() ? kExitOk : config_errors(values.errors, err);
  }

  try {
    if (cmd.name == "synth") return cmd_synth(values, out, err);
    if (cmd.name == "gen-faces") return cmd_gen_faces(values, out, err);
    if (cmd.name == "train-teacher") return cmd_train_teacher(values, out, err);
    if (cmd.name == "train-student") return cmd_train_student(values, out, err);
    if (cmd.name == "eval") return cmd_eval(values, out, err);
    if (cmd.name == "apply-filter") return cmd_apply(values, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace facemat::cli
