#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "facemat/core/manifest.hpp"
#include "facemat/core/raster_io.hpp"
#include "facemat/synth/affine.hpp"
#include "facemat/synth/compose.hpp"
#include "facemat/synth/dataset.hpp"
#include "facemat/synth/generators.hpp"
#include "support.hpp"

using namespace facemat;
using namespace facemat::synth;
using facemat::testing::random_field;
using facemat::testing::random_image;
using facemat::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Dense truncated-Gaussian convolution with edge replication, one pixel at a time.
double dense_blur_at(const Field& f, double sigma, int y, int x) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double acc = 0.0, norm = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double k = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      const int yy = std::clamp(y + dy, 0, f.height() - 1), xx = std::clamp(x + dx, 0, f.width() - 1);
      acc += k * f(yy, xx);
      norm += k;
    }
  }
  return acc / norm;
}

/// Literal morphology: a pixel survives erosion when every in-raster pixel
/// within Euclidean distance r satisfies the predicate.
template <class Pred>
bool eroded(const Field& a, int y, int x, int r, Pred pred) {
  for (int yy = 0; yy < a.height(); ++yy)
    for (int xx = 0; xx < a.width(); ++xx)
      if ((yy - y) * (yy - y) + (xx - x) * (xx - x) <= r * r && !pred(a(yy, xx))) return false;
  return true;
}

Trimap trimap_oracle(const Field& a, int er, int dr) {
  Trimap t(a.height(), a.width(), TrimapLabel::Unknown);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (eroded(a, y, x, er, [](double v) { return v >= kFgThreshold; })) t(y, x) = TrimapLabel::Foreground;
      if (eroded(a, y, x, er, [](double v) { return v <= kBgThreshold; })) t(y, x) = TrimapLabel::Background;
      bool near_fraction = false;
      for (int yy = 0; yy < a.height(); ++yy)
        for (int xx = 0; xx < a.width(); ++xx) {
          const double v = a(yy, xx);
          if (v > kBgThreshold && v < kFgThreshold && (yy - y) * (yy - y) + (xx - x) * (xx - x) <= dr * dr)
            near_fraction = true;
        }
      if (near_fraction) t(y, x) = TrimapLabel::Unknown;
    }
  }
  return t;
}

/// Whether `canvas` equals `asset` pasted at an integer offset (zero elsewhere).
bool pasted_somewhere(const Field& canvas, const Field& asset) {
  for (int oy = -asset.height(); oy <= canvas.height(); ++oy) {
    for (int ox = -asset.width(); ox <= canvas.width(); ++ox) {
      bool ok = true;
      for (int y = 0; y < canvas.height() && ok; ++y) {
        for (int x = 0; x < canvas.width() && ok; ++x) {
          const int ay = y - oy, ax = x - ox;
          const bool in = ay >= 0 && ay < asset.height() && ax >= 0 && ax < asset.width();
          ok = canvas(y, x) == (in ? asset(ay, ax) : 0.0);
        }
      }
      if (ok) return true;
    }
  }
  return false;
}

OcclusionAsset l_shaped_asset() {
  OcclusionAsset a;
  a.alpha = AlphaMatte(20, 24, 0.0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x)
      if (x < 6 || y >= 14) a.alpha(y, x) = 1.0;
  a.color = ImageFrame(20, 24, 0.3);
  a.source = OcclusionSource::HardMask;
  return a;
}

SynthConfig identity_augmentation() {
  SynthConfig cfg;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.rotation_deg = 0.0;
  cfg.flip_prob = 0.0;
  cfg.jitter_brightness = cfg.jitter_contrast = cfg.jitter_saturation = 0.0;
  cfg.min_area = 0.0;
  cfg.max_area = 1.0;
  return cfg;
}

SynthConfig small_dataset(int n, double ratio) {
  SynthConfig cfg;
  cfg.size = 64;
  cfg.n = n;
  cfg.clip_length = 2;
  cfg.occlusion_ratio = ratio;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("composite_pixelwise endpoints and midpoint") {
  Rng rng = seeded_rng(1);
  const ImageFrame fg = random_image(rng, 8, 8), bg = random_image(rng, 8, 8);
  CHECK(composite_pixelwise(fg, bg, Field(8, 8, 0.0)) == bg);
  CHECK(composite_pixelwise(fg, bg, Field(8, 8, 1.0)) == fg);
  const auto mid = composite_pixelwise(ImageFrame(8, 8, 1.0), ImageFrame(8, 8, 0.0), Field(8, 8, 0.5));
  CHECK(mid == ImageFrame(8, 8, 0.5));
  CHECK_THROWS_AS(composite_pixelwise(fg, bg, Field(8, 9, 0.0)), InvalidInput);
}

TEST_CASE("make_face_alpha is the skin/occluder product") {
  Rng rng = seeded_rng(2);
  const Field skin = random_field(rng, 8, 8);
  CHECK(make_face_alpha(skin, Field(8, 8, 0.0)) == skin);
  CHECK(make_face_alpha(skin, Field(8, 8, 1.0)) == Field(8, 8, 0.0));
  Field s(1, 1, 1.0), o(1, 1, 0.3);
  CHECK(make_face_alpha(s, o)(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(make_face_alpha(skin, Field(4, 4)), InvalidInput);
}

TEST_CASE("blur_mask_boundary against a dense convolution") {
  CHECK(blur_mask_boundary(Field(16, 16, 1.0), 2.0) == Field(16, 16, 1.0));
  CHECK(blur_mask_boundary(Field(16, 16, 0.0), 2.0) == Field(16, 16, 0.0));

  Field half(32, 32, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) half(y, x) = 1.0;
  const Field out = blur_mask_boundary(half, 2.0);
  for (int y = 0; y < 32; y += 3)
    for (int x = 0; x < 32; ++x) CHECK(out(y, x) == doctest::Approx(dense_blur_at(half, 2.0, y, x)).epsilon(1e-9));
  // The edge line lies between columns 15 and 16.
  CHECK(std::abs(0.5 * (out(16, 15) + out(16, 16)) - 0.5) <= 0.05);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      CHECK((out(y, x) >= 0.0 && out(y, x) <= 1.0));
      const double dist = x < 16 ? 15.5 - x : x - 15.5;
      if (dist > 6.0) CHECK(std::abs(out(y, x) - half(y, x)) <= 1e-3);
    }
  }
}

TEST_CASE("gen_random_shape is seeded, bounded and varied") {
  Rng a = seeded_rng(9), b = seeded_rng(9);
  CHECK(gen_random_shape(a, 64, 64) == gen_random_shape(b, 64, 64));
  int similar_pairs = 0;
  for (int s = 0; s < 50; ++s) {
    Rng r1 = seeded_rng(100 + 2 * s), r2 = seeded_rng(101 + 2 * s);
    const Field f1 = gen_random_shape(r1, 64, 64), f2 = gen_random_shape(r2, 64, 64);
    const double area = area_fraction(f1);
    CHECK((area > 0.0 && area < 1.0));
    for (double v : f1.values()) CHECK((v == 0.0 || v == 1.0));
    int diff = 0;
    for (std::size_t i = 0; i < f1.size(); ++i) diff += f1[i] != f2[i];
    similar_pairs += diff < static_cast<int>(0.01 * f1.size());
  }
  CHECK(similar_pairs == 0);
}

TEST_CASE("procedural faces: seeded, binary skin, area in [0.1, 0.6]") {
  Rng a = seeded_rng(4), b = seeded_rng(4);
  const auto f1 = gen_procedural_face(a, 128), f2 = gen_procedural_face(b, 128);
  CHECK(f1.image == f2.image);
  CHECK(f1.skin == f2.skin);
  double lo = 1.0, hi = 0.0;
  for (int s = 0; s < 1000; ++s) {
    Rng r = seeded_rng(static_cast<std::uint64_t>(s));
    const auto f = gen_procedural_face(r, 128);
    const double area = area_fraction(f.skin);
    lo = std::min(lo, area);
    hi = std::max(hi, area);
    if (s == 0) {
      for (double v : f.skin.values()) CHECK((v == 0.0 || v == 1.0));
      ClipSample one;
      one.frames = {f.image};
      one.alphas = {f.skin};
      one.trimaps = {Trimap(128, 128, TrimapLabel::Unknown)};
      CHECK(validate_sample(one).empty());
    }
  }
  MESSAGE("skin area range over 1000 seeds: [" << lo << ", " << hi << "]");
  CHECK(lo >= 0.1);
  CHECK(hi <= 0.6);
}

TEST_CASE("interp_affine endpoints") {
  const auto a0 = AffineTransform::similarity(10, 10, 15, 1.1, 2, -3);
  const auto a1 = AffineTransform::similarity(10, 10, -5, 0.9, -1, 4);
  CHECK(interp_affine(a0, a1, 0, 5) == a0);
  CHECK(interp_affine(a0, a1, 4, 5) == a1);
  CHECK(interp_affine(a0, a1, 0, 1) == a0);
  for (int t = 0; t < 6; ++t) CHECK(interp_affine({}, {}, t, 6) == AffineTransform::identity());
  const auto mid = interp_affine(a0, a1, 2, 5);
  CHECK(mid.m[0][2] == doctest::Approx(0.5 * (a0.m[0][2] + a1.m[0][2])));
  CHECK_THROWS_AS(interp_affine(a0, a1, 5, 5), InvalidInput);

  const auto inv = a0.inverse().compose(a0);
  CHECK(inv.m[0][0] == doctest::Approx(1.0));
  CHECK(inv.m[0][2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("warp is exact at integer translations") {
  Rng rng = seeded_rng(3);
  const Field f = random_field(rng, 10, 10);
  const Field g = warp(f, AffineTransform::translation(2, 1), Padding::Zero);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) CHECK(g(y, x) == (y >= 1 && x >= 2 ? f(y - 1, x - 2) : 0.0));
}

TEST_CASE("place_occlusion with identity augmentation pastes the asset") {
  const auto asset = l_shaped_asset();
  auto cfg = identity_augmentation();
  Rng rng = seeded_rng(21);
  const Layer layer = place_occlusion(asset, 64, 64, rng, cfg);
  CHECK(pasted_somewhere(layer.alpha, asset.alpha));

  cfg.flip_prob = 1.0;
  Rng rng2 = seeded_rng(22);
  const Layer flipped = place_occlusion(asset, 64, 64, rng2, cfg);
  Field mirror(asset.alpha.height(), asset.alpha.width());
  for (int y = 0; y < mirror.height(); ++y)
    for (int x = 0; x < mirror.width(); ++x) mirror(y, x) = asset.alpha(y, mirror.width() - 1 - x);
  CHECK(pasted_somewhere(flipped.alpha, mirror));

  Rng r3 = seeded_rng(23), r4 = seeded_rng(23);
  SynthConfig def;
  const auto p1 = place_occlusion(asset, 64, 64, r3, def), p2 = place_occlusion(asset, 64, 64, r4, def);
  CHECK(p1.alpha == p2.alpha);
  CHECK(p1.color == p2.color);
  const double area = area_fraction(p1.alpha);
  CHECK((area >= def.min_area && area <= def.max_area));
}

TEST_CASE("animate_clip layers and motion") {
  Rng rng = seeded_rng(31);
  const auto face = gen_procedural_face(rng, 64);
  const Field occ = gen_random_shape(rng, 64, 64);
  Field occ_small(64, 64, 0.0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) occ_small(y, x) = occ(y + 22, x + 22);
  const ImageFrame occ_color(64, 64, 0.2);

  AnimateOptions opt;
  opt.length = 4;
  Rng r = seeded_rng(1);
  auto still = animate_clip(face.image, face.skin, occ_color, occ_small, {}, {}, opt, r);
  for (int t = 1; t < 4; ++t) CHECK(still.sample.frames[t] == still.sample.frames[0]);

  opt.target = MotionTarget::Occluder;
  auto moving = animate_clip(face.image, face.skin, occ_color, occ_small, {}, AffineTransform::translation(9, 0), opt, r);
  Field ever_covered(64, 64, 0.0);
  for (const auto& a : moving.occ_alpha_layers)
    for (std::size_t i = 0; i < a.size(); ++i) ever_covered[i] = std::max(ever_covered[i], a[i]);
  for (int t = 1; t < 4; ++t)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (ever_covered(y, x) == 0.0) CHECK(moving.sample.frames[t](0, y, x) == moving.sample.frames[0](0, y, x));

  opt.target = MotionTarget::Face;
  const auto a1 = AffineTransform::similarity(31.5, 31.5, 6, 1.05, 3, -2);
  auto clip = animate_clip(face.image, face.skin, occ_color, occ_small, {}, a1, opt, r);
  for (int t = 0; t < 4; ++t) {
    const auto a = interp_affine({}, a1, t, 4);
    const Field skin_t = t == 0 ? face.skin : warp(face.skin, a, Padding::Zero);
    CHECK(clip.sample.alphas[t] == make_face_alpha(skin_t, occ_small));
  }
  CHECK(validate_sample(clip.sample).empty());

  Rng rr = seeded_rng(2);
  CHECK_THROWS_AS(animate_clip(face.image, face.skin, occ_color, occ_small, {}, AffineTransform::translation(200, 0),
                               opt, rr),
                  Rejected);
}

TEST_CASE("gen_trimap matches brute-force morphology") {
  Field edge(8, 8, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) edge(y, x) = 1.0;
  const Trimap t = gen_trimap(edge, 3, 3);
  CHECK(t == trimap_oracle(edge, 3, 3));
  for (int y = 0; y < 8; ++y) {
    int unknown = 0;
    for (int x = 0; x < 8; ++x) unknown += t(y, x) == TrimapLabel::Unknown;
    CHECK(unknown == 6);
  }

  CHECK(gen_trimap(Field(8, 8, 1.0), 3, 3) == Trimap(8, 8, TrimapLabel::Foreground));

  Rng rng = seeded_rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Field a = blur_mask_boundary(gen_random_shape(rng, 16, 16), 1.0);
    const Trimap got = gen_trimap(a, 2, 2);
    CHECK(got == trimap_oracle(a, 2, 2));
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] > kBgThreshold && a[i] < kFgThreshold) CHECK(got[i] == TrimapLabel::Unknown);
  }
}

TEST_CASE("config validation aggregates problems") {
  SynthConfig cfg;
  cfg.occlusion_ratio = 1.5;
  cfg.blur_sigma = 0.0;
  cfg.erode_r = 0;
  CHECK(cfg.validate().size() == 3);
  CHECK(SynthConfig{}.validate().empty());
  CHECK(parse_ratio_schedule("0:0.1,5:0.25") == std::vector<RatioStep>{{0, 0.1}, {5, 0.25}});
  CHECK(parse_ratio_schedule("fixed").empty());
  CHECK_THROWS_AS(parse_ratio_schedule("oops"), InvalidInput);
}

TEST_CASE("occluded_count honours the ratio") {
  CHECK(occluded_count(100, 0.25) == 25);
  CHECK(occluded_count(64, 0.25) == 16);
  CHECK(occluded_count(10, 0.0) == 0);
  CHECK(occluded_count(10, 1.0) == 10);
}

TEST_CASE("synth_dataset: ratio, determinism, occlusion-free clips") {
  TempDir d1("synth_a"), d2("synth_b"), d3("synth_c");
  auto cfg = small_dataset(8, 0.25);
  cfg.test_fraction = 0.25;
  SynthSummary sum;
  const auto m = synth_dataset(cfg, d1.path() / "nested" / "out", &sum);
  CHECK(sum.train + sum.test == 8);
  CHECK(sum.test == 2);
  CHECK(m.records.size() == 8);
  CHECK(validate_manifest(read_manifest(d1.path() / "nested" / "out" / "manifest.jsonl")).empty());
  int occluded = 0;
  for (const auto& r : m.records) occluded += r.source != OcclusionSource::None;
  CHECK(occluded == sum.occluded);
  CHECK(occluded == occluded_count(6, 0.25) + occluded_count(2, 0.25));

  synth_dataset(cfg, d2.path());
  for (const auto& r : m.records) {
    for (const auto& f : r.frames) CHECK(slurp(d1.path() / "nested" / "out" / f) == slurp(d2.path() / f));
    for (const auto& f : r.alphas) CHECK(slurp(d1.path() / "nested" / "out" / f) == slurp(d2.path() / f));
  }
  CHECK(slurp(d1.path() / "nested" / "out" / "manifest.jsonl") == slurp(d2.path() / "manifest.jsonl"));

  auto clean = small_dataset(4, 0.0);
  clean.write_layers = true;
  const auto mc = synth_dataset(clean, d3.path());
  for (const auto& r : mc.records) {
    CHECK(r.source == OcclusionSource::None);
    const auto clip = load_clip(mc, r);
    const auto dir = (d3.path() / r.frames[0]).parent_path();
    for (std::size_t t = 0; t < clip.length(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "skin_%03zu.png", t);
      CHECK(clip.alphas[t] == load_matte(dir / name));
    }
  }

  auto bad = small_dataset(4, 1.5);
  CHECK_THROWS_AS(synth_dataset(bad, d3.path() / "bad"), ConfigError);
}

TEST_CASE("larger ratios occlude a superset of clips") {
  TempDir d1("ratio_lo"), d2("ratio_hi");
  const auto lo = synth_dataset(small_dataset(8, 0.25), d1.path());
  const auto hi = synth_dataset(small_dataset(8, 0.5), d2.path());
  for (std::size_t i = 0; i < lo.records.size(); ++i) {
    REQUIRE(lo.records[i].sample_id == hi.records[i].sample_id);
    if (lo.records[i].source != OcclusionSource::None) CHECK(hi.records[i].source != OcclusionSource::None);
  }
}
