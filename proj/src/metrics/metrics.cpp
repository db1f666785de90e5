#include "facemat/metrics/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "facemat/distill/checkpoint.hpp"
#include "facemat/model/model.hpp"
#include "facemat/synth/compose.hpp"

namespace facemat::metrics {
namespace {

using json = nlohmann::json;

constexpr double kScale = 1000.0;
/// Minimum drop below the connectivity level that counts as disconnected.
constexpr double kConnTheta = 0.15;

void check_inputs(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap, const char* what) {
  require_same_shape(pred, gt, what);
  require_same_shape(pred, trimap, what);
}

bool is_unknown(TrimapLabel l) { return l == TrimapLabel::Unknown; }

template <class F>
std::optional<double> sum_unknown(const Trimap& trimap, F&& f) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < trimap.size(); ++i) {
    if (!is_unknown(trimap[i])) continue;
    s += f(i);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s;
}

/// The prediction with known trimap regions forced to their labels (0 on BG,
/// 1 on FG), as evaluation scripts do before the neighbourhood metrics.
AlphaMatte pin_known(const AlphaMatte& pred, const Trimap& trimap) {
  AlphaMatte out = pred;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (trimap[i] == TrimapLabel::Background) out[i] = 0.0;
    if (trimap[i] == TrimapLabel::Foreground) out[i] = 1.0;
  }
  return out;
}

std::size_t unknown_count(const Trimap& t) {
  return static_cast<std::size_t>(std::count(t.values().begin(), t.values().end(), TrimapLabel::Unknown));
}

/// Largest 4-connected component of `m`. On equal sizes the component whose
/// first pixel comes first in column-major order wins.
Mask largest_component(const Mask& m) {
  const int H = m.height(), W = m.width();
  Grid<int> label(H, W, -1);
  std::vector<std::size_t> sizes;
  std::vector<long> first;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m(y, x) || label(y, x) >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      std::size_t count = 0;
      long best = static_cast<long>(x) * H + y;
      stack.push_back({y, x});
      label(y, x) = id;
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        ++count;
        best = std::min(best, static_cast<long>(cx) * H + cy);
        constexpr int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || ny >= H || nx < 0 || nx >= W || !m(ny, nx) || label(ny, nx) >= 0) continue;
          label(ny, nx) = id;
          stack.push_back({ny, nx});
        }
      }
      sizes.push_back(count);
      first.push_back(best);
    }
  }
  Mask out(H, W, 0);
  if (sizes.empty()) return out;
  int win = 0;
  for (int i = 1; i < static_cast<int>(sizes.size()); ++i) {
    if (sizes[i] > sizes[win] || (sizes[i] == sizes[win] && first[i] < first[win])) win = i;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label[i] == win;
  return out;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char b[32];
  std::snprintf(b, sizeof b, "%.6f", *v);
  return b;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json row_json(const MetricRow& m) {
  return {{"mse", opt_json(m.mse)},   {"sad", opt_json(m.sad)},           {"grad", opt_json(m.grad)},
          {"conn", opt_json(m.conn)}, {"iou", m.iou}, {"accuracy", m.accuracy}, {"recall", m.recall}};
}

std::string row_cells(const MetricRow& m) {
  std::string s;
  for (const auto& v : {m.mse, m.sad, m.grad, m.conn, std::optional<double>(m.iou), std::optional<double>(m.accuracy),
                        std::optional<double>(m.recall)}) {
    char b[40];
    std::snprintf(b, sizeof b, " %10s", fmt(v).c_str());
    s += b;
  }
  return s;
}

SampleResult evaluate_record(const DatasetManifest& m, const ManifestRecord& r, const model::MattingNet* net,
                             const MetricConfig& cfg) {
  SampleResult out;
  out.sample_id = r.sample_id;
  ClipSample clip = load_clip(m, r, !r.trimaps.empty());
  if (clip.trimaps.empty()) {
    // Same radii the synthesizer uses by default.
    for (const auto& a : clip.alphas) clip.trimaps.push_back(synth::gen_trimap(a, 5, 5));
  }
  std::vector<AlphaMatte> pred;
  if (net) {
    for (auto& b : model::predict_padded(*net, clip.frames)) pred.push_back(std::move(b.alpha_mean));
  } else {
    pred = clip.alphas;
  }
  out.frames = static_cast<int>(clip.length());
  std::vector<SampleResult> frames;
  for (std::size_t t = 0; t < clip.length(); ++t) {
    SampleResult f;
    f.metrics = frame_metrics(pred[t], clip.alphas[t], clip.trimaps[t], cfg);
    if (!f.metrics.mse) ++out.na_frames;
    frames.push_back(std::move(f));
  }
  out.metrics = aggregate(frames);
  return out;
}

}  // namespace

std::optional<double> mse_unknown(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap) {
  check_inputs(pred, gt, trimap, "mse_unknown: size mismatch");
  auto s = sum_unknown(trimap, [&](std::size_t i) { return (pred[i] - gt[i]) * (pred[i] - gt[i]); });
  if (!s) return s;
  return *s / static_cast<double>(unknown_count(trimap));
}

std::optional<double> sad_unknown(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap) {
  check_inputs(pred, gt, trimap, "sad_unknown: size mismatch");
  auto s = sum_unknown(trimap, [&](std::size_t i) { return std::abs(pred[i] - gt[i]); });
  if (!s) return s;
  return *s / kScale;
}

int gradient_halfsize(double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("gradient sigma must be > 0");
  constexpr double kEps = 1e-2;
  return static_cast<int>(std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * M_PI) * sigma * kEps))));
}

void gradient_kernels(double sigma, std::vector<double>& gauss, std::vector<double>& deriv) {
  const int r = gradient_halfsize(sigma);
  gauss.assign(2 * r + 1, 0.0);
  deriv.assign(2 * r + 1, 0.0);
  double sg = 0.0, sd = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double g = std::exp(-i * i / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * M_PI));
    gauss[i + r] = g;
    deriv[i + r] = -i * g / (sigma * sigma);
    sg += g * g;
    sd += deriv[i + r] * deriv[i + r];
  }
  const double norm = std::sqrt(sg * sd);
  for (double& d : deriv) d /= norm;
}

Field gradient_magnitude(const Field& f, double sigma) {
  std::vector<double> g, d;
  gradient_kernels(sigma, g, d);
  const int r = static_cast<int>(g.size() / 2);
  const int H = f.height(), W = f.width();
  auto at = [&](const Field& s, int y, int x) { return s(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1)); };
  // Horizontal pass: derivative for gx, smoothing for gy.
  Field hd(H, W), hg(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double a = 0.0, b = 0.0;
      for (int k = -r; k <= r; ++k) {
        const double v = at(f, y, x + k);
        a += d[k + r] * v;
        b += g[k + r] * v;
      }
      hd(y, x) = a;
      hg(y, x) = b;
    }
  }
  Field out(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int k = -r; k <= r; ++k) {
        gx += g[k + r] * at(hd, y + k, x);
        gy += d[k + r] * at(hg, y + k, x);
      }
      out(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

std::optional<double> grad_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap, double sigma) {
  check_inputs(pred, gt, trimap, "grad_error: size mismatch");
  if (unknown_count(trimap) == 0) return std::nullopt;
  const Field gp = gradient_magnitude(pin_known(pred, trimap), sigma), gg = gradient_magnitude(gt, sigma);
  auto s = sum_unknown(trimap, [&](std::size_t i) { return (gp[i] - gg[i]) * (gp[i] - gg[i]); });
  return *s / kScale;
}

Field connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step) {
  require_same_shape(pred, gt, "connectivity: size mismatch");
  if (!(step > 0.0 && step <= 1.0)) throw InvalidInput("connectivity step must be in (0,1]");
  const int n = static_cast<int>(std::lround(1.0 / step));
  Field level(pred.height(), pred.width(), -1.0);
  Mask both(pred.height(), pred.width());
  for (int i = 1; i <= n; ++i) {
    const double th = i * step;
    for (std::size_t p = 0; p < both.size(); ++p) both[p] = pred[p] >= th && gt[p] >= th;
    const Mask omega = largest_component(both);
    for (std::size_t p = 0; p < level.size(); ++p) {
      if (level[p] == -1.0 && !omega[p]) level[p] = (i - 1) * step;
    }
  }
  for (double& l : level.values()) {
    if (l == -1.0) l = 1.0;
  }
  return level;
}

std::optional<double> conn_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap, double step) {
  check_inputs(pred, gt, trimap, "conn_error: size mismatch");
  if (unknown_count(trimap) == 0) return std::nullopt;
  const AlphaMatte p = pin_known(pred, trimap);
  const Field level = connectivity_levels(p, gt, step);
  auto phi = [](double a, double l) {
    const double d = a - l;
    return 1.0 - (d >= kConnTheta ? d : 0.0);
  };
  auto s = sum_unknown(trimap, [&](std::size_t i) { return std::abs(phi(p[i], level[i]) - phi(gt[i], level[i])); });
  return *s / kScale;
}

Mask binarize(const Field& matte, double threshold) {
  Mask m(matte.height(), matte.width());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = matte[i] >= threshold;
  return m;
}

Confusion confusion(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "confusion: size mismatch");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double iou(const Mask& pred, const Mask& gt) {
  const Confusion c = confusion(pred, gt);
  const auto u = c.tp + c.fp + c.fn;
  return u == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(u);
}

double pixel_accuracy(const Mask& pred, const Mask& gt) {
  const Confusion c = confusion(pred, gt);
  const auto n = c.tp + c.fp + c.fn + c.tn;
  return n == 0 ? 1.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

double recall(const Mask& pred, const Mask& gt) {
  const Confusion c = confusion(pred, gt);
  return c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

MetricRow frame_metrics(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap, const MetricConfig& cfg) {
  MetricRow r;
  r.mse = mse_unknown(pred, gt, trimap);
  r.sad = sad_unknown(pred, gt, trimap);
  r.grad = grad_error(pred, gt, trimap, cfg.grad_sigma);
  r.conn = conn_error(pred, gt, trimap, cfg.conn_step);
  const Mask pb = binarize(pred, cfg.threshold), gb = binarize(gt, cfg.threshold);
  r.iou = iou(pb, gb);
  r.accuracy = pixel_accuracy(pb, gb);
  r.recall = recall(pb, gb);
  return r;
}

MetricRow aggregate(const std::vector<SampleResult>& samples) {
  MetricRow out;
  auto mean = [&](auto get) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (const auto& r : samples) {
      if (!r.ok) continue;
      if (const std::optional<double> v = get(r.metrics)) {
        s += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return s / n;
  };
  out.mse = mean([](const MetricRow& m) { return m.mse; });
  out.sad = mean([](const MetricRow& m) { return m.sad; });
  out.grad = mean([](const MetricRow& m) { return m.grad; });
  out.conn = mean([](const MetricRow& m) { return m.conn; });
  out.iou = mean([](const MetricRow& m) { return std::optional<double>(m.iou); }).value_or(0.0);
  out.accuracy = mean([](const MetricRow& m) { return std::optional<double>(m.accuracy); }).value_or(0.0);
  out.recall = mean([](const MetricRow& m) { return std::optional<double>(m.recall); }).value_or(0.0);
  return out;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    const EvalConfig& cfg) {
  const DatasetManifest m = read_manifest(manifest);
  const auto records = select_split(m, cfg.split);
  if (records.empty()) throw InvalidInput("manifest has no " + std::string(to_string(cfg.split)) + " records");
  std::optional<model::MattingNet> net;
  EvalReport rep;
  rep.config = cfg;
  rep.split = std::string(to_string(cfg.split));
  if (cfg.oracle) {
    rep.checkpoint_hash = "oracle";
  } else {
    net.emplace(distill::load_model(checkpoint));
    rep.checkpoint_hash = distill::file_hash(checkpoint);
  }

  rep.samples.resize(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        rep.samples[i] = evaluate_record(m, *records[i], net ? &*net : nullptr, cfg.metric);
      } catch (const std::exception& e) {
        rep.samples[i].sample_id = records[i]->sample_id;
        rep.samples[i].ok = false;
        rep.samples[i].error = e.what();
      }
    }
  };
  const int workers = std::clamp(cfg.workers, 1, static_cast<int>(records.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  for (const auto& s : rep.samples) {
    if (!s.ok) {
      ++rep.failed;
      continue;
    }
    ++rep.evaluated;
    if (!s.metrics.mse) ++rep.not_applicable;
  }
  rep.aggregate = aggregate(rep.samples);
  return rep;
}

std::string summary_row(const MetricRow& m) {
  char h[160];
  std::snprintf(h, sizeof h, "%10s %10s %10s %10s %10s %10s\n", "MSE", "SAD", "Grad", "Conn", "IoU", "Accuracy");
  std::string s = h;
  for (const auto& v : {m.mse, m.sad, m.grad, m.conn, std::optional<double>(m.iou), std::optional<double>(m.accuracy)}) {
    char b[40];
    std::snprintf(b, sizeof b, "%10s ", fmt(v).c_str());
    s += b;
  }
  s.back() = '\n';
  return s;
}

std::string EvalReport::to_text() const {
  std::ostringstream o;
  o << "facemat evaluation report\n";
  o << "checkpoint: " << checkpoint_hash << "\n";
  o << "split: " << split << "\n";
  o << "grad_sigma: " << config.metric.grad_sigma << "  conn_step: " << config.metric.conn_step
    << "  threshold: " << config.metric.threshold << "  sad/grad/conn scale: 1/1000\n";
  o << "samples: evaluated " << evaluated << ", failed " << failed << ", not applicable " << not_applicable << "\n\n";
  char h[200];
  std::snprintf(h, sizeof h, "%-24s %6s %10s %10s %10s %10s %10s %10s %10s\n", "sample", "frames", "MSE", "SAD", "Grad",
                "Conn", "IoU", "Accuracy", "Recall");
  o << h;
  for (const auto& s : samples) {
    if (!s.ok) continue;
    char b[64];
    std::snprintf(b, sizeof b, "%-24s %6d", s.sample_id.c_str(), s.frames);
    o << b << row_cells(s.metrics) << "\n";
  }
  char b[64];
  std::snprintf(b, sizeof b, "%-24s %6s", "aggregate", "");
  o << b << row_cells(aggregate) << "\n";
  if (failed > 0) {
    o << "\nfailures:\n";
    for (const auto& s : samples) {
      if (!s.ok) o << "  " << s.sample_id << ": " << s.error << "\n";
    }
  }
  return o.str();
}

std::string EvalReport::to_json() const {
  json j;
  j["checkpoint"] = checkpoint_hash;
  j["split"] = split;
  j["config"] = {{"grad_sigma", config.metric.grad_sigma},
                 {"conn_step", config.metric.conn_step},
                 {"threshold", config.metric.threshold},
                 {"scale", kScale},
                 {"oracle", config.oracle}};
  j["counts"] = {{"evaluated", evaluated}, {"failed", failed}, {"not_applicable", not_applicable}};
  j["aggregate"] = row_json(aggregate);
  j["samples"] = json::array();
  for (const auto& s : samples) {
    json e = {{"sample_id", s.sample_id}, {"ok", s.ok}};
    if (s.ok) {
      e["frames"] = s.frames;
      e["na_frames"] = s.na_frames;
      e["metrics"] = row_json(s.metrics);
    } else {
      e["error"] = s.error;
    }
    j["samples"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& r, const std::filesystem::path& base) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  auto put = [](std::filesystem::path p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report: " + p.string());
    out << text;
  };
  auto txt = base, js = base;
  txt += ".txt";
  js += ".json";
  put(txt, r.to_text());
  put(js, r.to_json());
}

}  // namespace facemat::metrics
