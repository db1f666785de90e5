#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "doctest.h"
#include "facemat/metrics/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace facemat;
using namespace facemat::oracle;
using namespace facemat::metrics;
using facemat::testing::make_dataset;
using facemat::testing::random_field;
using facemat::testing::TempDir;

namespace {

Trimap random_trimap(Rng& rng, int h, int w, double p_unknown = 0.4) {
  Trimap t(h, w);
  for (auto& v : t.values()) {
    const double u = rng.uniform();
    v = u < p_unknown ? TrimapLabel::Unknown : (u < (1.0 + p_unknown) / 2 ? TrimapLabel::Background : TrimapLabel::Foreground);
  }
  return t;
}

Trimap all_unknown(int h, int w) { return Trimap(h, w, TrimapLabel::Unknown); }

}  // namespace

TEST_CASE("MSE and SAD equal the double-loop oracle exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Field p = random_field(rng, 8, 8), g = random_field(rng, 8, 8);
    Trimap t = random_trimap(rng, 8, 8);
    t(0, 0) = TrimapLabel::Unknown;
    CHECK(*mse_unknown(p, g, t) == oracle_mse(p, g, t));
    CHECK(*sad_unknown(p, g, t) == oracle_sad(p, g, t));
  }
}

TEST_CASE("MSE and SAD worked examples") {
  Field p(3, 3, 0.0), g(3, 3, 0.0);
  Trimap t(3, 3, TrimapLabel::Background);
  t(0, 1) = t(2, 2) = TrimapLabel::Unknown;
  p(0, 1) = 0.1;
  g(2, 2) = 0.3;
  p(1, 1) = 0.9;  // BG pixel: ignored
  CHECK(*mse_unknown(p, g, t) == doctest::Approx(0.05).epsilon(1e-15));

  Field a(40, 25, 1.0), b(40, 25, 0.0);
  CHECK(*sad_unknown(a, b, all_unknown(40, 25)) == doctest::Approx(1.0));
  CHECK(*mse_unknown(a, a, all_unknown(40, 25)) == 0.0);
  CHECK(*sad_unknown(a, a, all_unknown(40, 25)) == 0.0);
}

TEST_CASE("empty UNKNOWN region is not applicable") {
  const Field p(4, 4, 0.2), g(4, 4, 0.7);
  const Trimap t(4, 4, TrimapLabel::Foreground);
  CHECK_FALSE(mse_unknown(p, g, t));
  CHECK_FALSE(sad_unknown(p, g, t));
  CHECK_FALSE(grad_error(p, g, t));
  CHECK_FALSE(conn_error(p, g, t));
  const MetricRow r = frame_metrics(p, g, t, MetricConfig{});
  CHECK_FALSE(r.mse);
  CHECK(r.iou == 0.0);  // segmentation metrics still apply
  CHECK(r.accuracy == 0.0);
}

TEST_CASE("gradient kernel support") {
  CHECK(gradient_halfsize(1.4) == 4);
  std::vector<double> g, d;
  gradient_kernels(1.4, g, d);
  CHECK(g.size() == 9);
  double sg = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    sg += g[i] * g[i];
    sd += d[i] * d[i];
    CHECK(d[i] == doctest::Approx(-d[8 - i]));
  }
  CHECK(sg * sd == doctest::Approx(1.0));
  CHECK_THROWS_AS(gradient_halfsize(0.0), InvalidInput);
}

TEST_CASE("Grad matches a dense 2-D convolution") {
  Field gt(16, 16, 0.0), pred(16, 16, 0.0);
  Trimap t(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      gt(y, x) = x >= 8;
      pred(y, x) = x >= 9;
      t(y, x) = x < 4 ? TrimapLabel::Background : x > 11 ? TrimapLabel::Foreground : TrimapLabel::Unknown;
    }
  }
  const double oracle = oracle_grad(pred, gt, t);
  CHECK(oracle > 0.0);
  CHECK(std::abs(*grad_error(pred, gt, t) - oracle) <= 1e-6);

  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Field p = random_field(rng, 16, 16), g = random_field(rng, 16, 16);
    Trimap tr = random_trimap(rng, 16, 16);
    tr(3, 3) = TrimapLabel::Unknown;
    CHECK(std::abs(*grad_error(p, g, tr) - oracle_grad(p, g, tr)) <= 1e-6);
  }

  CHECK(*grad_error(Field(8, 8, 0.3), Field(8, 8, 0.9), all_unknown(8, 8)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*grad_error(gt, gt, all_unknown(16, 16)) == 0.0);
}

TEST_CASE("Conn on the scripted two-blob raster") {
  // gt: blob A (columns 0-2, all rows) and blob B (columns 5-7, rows 2-5),
  // both 1. pred keeps A except A(3,1) = 0.5625, and sets B to 0.5.
  // Trimap: UNKNOWN on columns 1-6; column 0 and B's column 7 are FG, the
  // rest of column 7 is BG.
  const auto [pred, gt, t] = two_blob_case();

  // Trace. Pinning sets pred(y,7) = 1 on B's FG pixels.
  // θ=0.1..0.5: pred∧gt ⊇ A (24 px) and B (12 px); largest is A, so B and
  //   the zero pixels leave at θ=0.1 with level 0.
  // θ=0.6: A(3,1) = 0.5625 drops out; level 0.5. A minus it stays connected.
  // A's other pixels never drop: level 1.
  Field pinned = pred;
  for (int y = 2; y <= 5; ++y) pinned(y, 7) = 1.0;
  const Field level = connectivity_levels(pinned, gt);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const double want = x < 3 ? (y == 3 && x == 1 ? 0.5 : 1.0) : 0.0;
      CHECK(level(y, x) == want);
    }
  }
  // φ = 1 − d·[d ≥ 0.15], d = α − level.
  // B, columns 5-6 (8 UNKNOWN px): φ_pred = 1 − 0.5 = 0.5, φ_gt = 0 → 0.5 each.
  // A(3,1): d_pred = 0.0625 → φ 1; d_gt = 0.5 → φ 0.5 → 0.5.
  // Everything else on UNKNOWN agrees. Sum 4.5, scaled by 1/1000.
  CHECK(*conn_error(pred, gt, t) == kTwoBlobConn);
  CHECK(kTwoBlobConn == 4.5 / 1000);

  // Without any shared foreground every pixel falls to level 0.
  const Field zero(8, 8, 0.0), one(8, 8, 1.0);
  CHECK(*conn_error(zero, one, all_unknown(8, 8)) == 64 / 1000.0);
  CHECK(*conn_error(gt, gt, all_unknown(8, 8)) == 0.0);
}

TEST_CASE("Conn picks the first component in column-major order on ties") {
  Field a(6, 6, 0.0);
  for (int y = 0; y < 6; ++y) a(y, 0) = a(y, 5) = 1.0;
  const Field level = connectivity_levels(a, a);
  for (int y = 0; y < 6; ++y) {
    CHECK(level(y, 0) == 1.0);
    CHECK(level(y, 5) == 0.0);
  }
  // Diagonal contact does not join components.
  Field d(4, 4, 0.0);
  d(0, 0) = d(1, 1) = d(2, 2) = 1.0;
  const Field ld = connectivity_levels(d, d);
  CHECK(ld(0, 0) == 1.0);
  CHECK(ld(1, 1) == 0.0);
}

TEST_CASE("matting metrics ignore predictions outside UNKNOWN") {
  Rng rng(99);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Field g = random_field(rng, 12, 12);
    Field p = random_field(rng, 12, 12);
    Trimap t = random_trimap(rng, 12, 12);
    t(rng.uniform_int(0, 11), rng.uniform_int(0, 11)) = TrimapLabel::Unknown;
    Field q = p;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (t[i] != TrimapLabel::Unknown) q[i] = rng.uniform();
    }
    const bool same = *mse_unknown(p, g, t) == *mse_unknown(q, g, t) && *sad_unknown(p, g, t) == *sad_unknown(q, g, t) &&
                      *grad_error(p, g, t) == *grad_error(q, g, t) && *conn_error(p, g, t) == *conn_error(q, g, t);
    violations += !same;
  }
  CHECK(violations == 0);
}

TEST_CASE("binarize and segmentation identities") {
  Field f(1, 4);
  f[0] = 0.5;
  f[1] = 0.4999999;
  f[2] = 1.0;
  f[3] = 0.0;
  const Mask b = binarize(f);
  CHECK(b[0] == 1);
  CHECK(b[1] == 0);
  CHECK(b[2] == 1);
  CHECK(b[3] == 0);
  Field bf(1, 4);
  for (std::size_t i = 0; i < 4; ++i) bf[i] = b[i];
  CHECK(binarize(bf) == b);
  CHECK(binarize(Field(3, 3, 0.0)) == Mask(3, 3, 0));

  Mask p(2, 2, 1), g(2, 2, 1);
  g(1, 1) = 0;
  CHECK(pixel_accuracy(p, g) == 0.75);
  CHECK(iou(p, p) == 1.0);
  CHECK(recall(p, p) == 1.0);
  Mask l(2, 2, 0), r(2, 2, 0);
  l(0, 0) = 1;
  r(1, 1) = 1;
  CHECK(iou(l, r) == 0.0);
  CHECK(iou(Mask(2, 2, 0), Mask(2, 2, 0)) == 1.0);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Mask a = testing::random_mask(rng, 8, 8), c = testing::random_mask(rng, 8, 8);
    int tp = 0, fp = 0, fn = 0, tn = 0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        if (a(y, x) && c(y, x)) ++tp;
        else if (a(y, x)) ++fp;
        else if (c(y, x)) ++fn;
        else ++tn;
      }
    }
    const Confusion cm = confusion(a, c);
    CHECK(cm.tp == static_cast<std::uint64_t>(tp));
    CHECK(cm.fp == static_cast<std::uint64_t>(fp));
    CHECK(cm.fn == static_cast<std::uint64_t>(fn));
    CHECK(cm.tn == static_cast<std::uint64_t>(tn));
    if (tp + fp + fn > 0) CHECK(iou(a, c) == static_cast<double>(tp) / (tp + fp + fn));
    CHECK(pixel_accuracy(a, c) == static_cast<double>(tp + tn) / 64);
    if (tp + fn > 0) CHECK(recall(a, c) == static_cast<double>(tp) / (tp + fn));
  }
}

TEST_CASE("aggregate averages samples and skips N/A matting values") {
  std::vector<SampleResult> s(3);
  s[0].metrics.mse = 0.2;
  s[0].metrics.iou = 0.5;
  s[1].metrics.mse = std::nullopt;
  s[1].metrics.iou = 1.0;
  s[2].ok = false;
  s[2].metrics.mse = 100.0;
  const MetricRow a = aggregate(s);
  CHECK(*a.mse == 0.2);
  CHECK(a.iou == 0.75);
  CHECK_FALSE(a.sad);
}

TEST_CASE("evaluate: oracle mode, aggregation, determinism, failures") {
  TempDir dir("metrics_eval");
  const auto manifest = make_dataset(dir.path() / "data", 6, 64, 2, 3, 0.5);

  EvalConfig oc;
  oc.oracle = true;
  const EvalReport o = evaluate({}, manifest, oc);
  CHECK(o.checkpoint_hash == "oracle");
  CHECK(o.evaluated == 3);
  CHECK(o.failed == 0);
  CHECK(*o.aggregate.mse == 0.0);
  CHECK(*o.aggregate.sad == 0.0);
  CHECK(*o.aggregate.grad == 0.0);
  CHECK(*o.aggregate.conn == 0.0);
  CHECK(o.aggregate.iou == 1.0);
  CHECK(o.aggregate.accuracy == 1.0);
  CHECK(o.aggregate.recall == 1.0);
  CHECK(summary_row(o.aggregate).find("0.000000   0.000000   0.000000   0.000000   1.000000   1.000000") !=
        std::string::npos);

  const auto ckpt = testing::save_fresh_model(dir.path() / "m.ckpt", model::ModelConfig{2, 4});
  EvalConfig ec;
  ec.workers = 1;
  const EvalReport a = evaluate(ckpt, manifest, ec);
  ec.workers = 3;
  const EvalReport b = evaluate(ckpt, manifest, ec);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_text() == b.to_text());
  CHECK(a.checkpoint_hash == distill::file_hash(ckpt));
  double sum = 0.0;
  for (const auto& s : a.samples) sum += *s.metrics.sad;
  CHECK(*a.aggregate.sad == doctest::Approx(sum / 3).epsilon(1e-15));
  CHECK(*a.aggregate.sad > 0.0);

  write_report(a, dir.path() / "out" / "report");
  CHECK(testing::read_file(dir.path() / "out" / "report.json") == a.to_json());
  const auto j = nlohmann::json::parse(a.to_json());
  CHECK(j["config"]["grad_sigma"] == 1.4);
  CHECK(j["counts"]["evaluated"] == 3);

  // A broken sample is recorded and the rest still evaluate.
  const DatasetManifest m = read_manifest(manifest);
  const auto test = select_split(m, Split::Test);
  std::filesystem::remove(m.root / test[1]->frames[0]);
  const EvalReport c = evaluate(ckpt, manifest, ec);
  CHECK(c.failed == 1);
  CHECK(c.evaluated == 2);
  CHECK_FALSE(c.samples[1].ok);
  CHECK(c.samples[1].sample_id == test[1]->sample_id);
  CHECK(c.to_text().find("failures:") != std::string::npos);
}
