#include <fstream>

#include "doctest.h"
#include "facemat/core/manifest.hpp"
#include "facemat/core/raster_io.hpp"
#include "facemat/core/rng.hpp"
#include "facemat/core/types.hpp"
#include "support.hpp"

using namespace facemat;
using facemat::testing::random_image;
using facemat::testing::TempDir;

namespace {

ClipSample small_clip(int T, int h = 8, int w = 8) {
  ClipSample s;
  for (int t = 0; t < T; ++t) {
    s.frames.emplace_back(h, w, 0.5);
    s.alphas.emplace_back(h, w, 0.25);
    s.trimaps.emplace_back(h, w, TrimapLabel::Unknown);
  }
  return s;
}

std::size_t count_kind(const ValidationReport& r, ViolationKind k) {
  return static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [&](const Violation& v) { return v.kind == k; }));
}

}  // namespace

TEST_CASE("encode_trimap maps labels to 0/128/255") {
  Trimap fg(4, 4, TrimapLabel::Foreground);
  const auto fg_bytes = encode_trimap(fg);
  for (auto b : fg_bytes.values()) CHECK(b == 255);
  Trimap bg(4, 4, TrimapLabel::Background);
  const auto bg_bytes = encode_trimap(bg);
  for (auto b : bg_bytes.values()) CHECK(b == 0);

  Trimap checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker(y, x) = (x + y) % 2 ? TrimapLabel::Unknown : TrimapLabel::Background;
  const auto bytes = encode_trimap(checker);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(bytes(y, x) == ((x + y) % 2 ? 128 : 0));
  CHECK(decode_trimap(bytes) == checker);

  Grid<std::uint8_t> bad(2, 2, 0);
  bad(1, 1) = 7;
  CHECK_THROWS_AS(decode_trimap(bad), InvalidInput);
}

TEST_CASE("validate_sample reports each violation") {
  CHECK(validate_sample(small_clip(3)).empty());

  auto s = small_clip(3);
  s.alphas[1](2, 2) = 1.2;
  auto r = validate_sample(s);
  CHECK(r.size() == 1);
  CHECK(count_kind(r, ViolationKind::Range) == 1);

  auto l = small_clip(4);
  l.alphas.pop_back();
  r = validate_sample(l);
  CHECK(r.size() == 1);
  CHECK(count_kind(r, ViolationKind::LengthMismatch) == 1);

  auto m = small_clip(2);
  m.alphas[0] = Field(8, 9, 0.0);
  CHECK(count_kind(validate_sample(m), ViolationKind::SizeMismatch) == 1);

  auto n = small_clip(1);
  n.frames[0](0, 1, 1) = std::nan("");
  CHECK(count_kind(validate_sample(n), ViolationKind::NonFinite) == 1);

  CHECK(count_kind(validate_sample(small_clip(1, 4, 4)), ViolationKind::TooSmall) >= 1);
  CHECK(count_kind(validate_sample(ClipSample{}), ViolationKind::Empty) == 1);
}

TEST_CASE("seeded streams are reproducible and keyed") {
  Rng a = seeded_rng(0), b = seeded_rng(0), c = seeded_rng(1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);

  // Substreams depend only on (seed, key), not on the order they are made in.
  Rng s1 = substream(7, "train_00003");
  Rng other = substream(7, "train_00001");
  (void)other.uniform();
  Rng s2 = substream(7, "train_00003");
  CHECK(s1.uniform() == s2.uniform());
  CHECK(substream(7, "x").next_u64() != substream(7, "y").next_u64());

  Rng r = seeded_rng(3);
  for (int i = 0; i < 10; ++i) (void)r.uniform();
  const auto st = r.state();
  const double next = r.uniform();
  Rng q;
  q.restore(st);
  CHECK(q.uniform() == next);

  for (int i = 0; i < 1000; ++i) {
    const int v = r.uniform_int(-2, 3);
    CHECK((v >= -2 && v <= 3));
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
}

TEST_CASE("PNG round trip is lossless at 8 bits") {
  TempDir dir("png");
  Rng rng = seeded_rng(11);
  const ImageFrame img = random_image(rng, 9, 13);
  save_image(dir.path() / "img.png", img);
  const ImageFrame back = load_image(dir.path() / "img.png");
  REQUIRE(back.same_shape(img));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 13; ++x) CHECK(back(c, y, x) == doctest::Approx(quantize8(img(c, y, x)) / 255.0));

  Trimap t(8, 8, TrimapLabel::Background);
  t(3, 4) = TrimapLabel::Unknown;
  t(5, 5) = TrimapLabel::Foreground;
  save_trimap(dir.path() / "t.png", t);
  CHECK(load_trimap(dir.path() / "t.png") == t);

  CHECK(quantize8(-0.5) == 0);
  CHECK(quantize8(2.0) == 255);
  CHECK(quantize8(0.5) == 128);

  std::ofstream(dir.path() / "junk.png") << "not a png";
  CHECK_THROWS_AS(load_image(dir.path() / "junk.png"), IoError);
  CHECK_THROWS_AS(load_image(dir.path() / "missing.png"), IoError);
}

TEST_CASE("manifest lines round-trip and validation is order independent") {
  ManifestRecord r;
  r.sample_id = "train_00001";
  r.base_id = "train_00001";
  r.source = OcclusionSource::Texture;
  r.seed = 42;
  r.ratio = 0.25;
  r.frames = {"a.png"};
  r.alphas = {"b.png"};
  r.trimaps = {"c.png"};
  const auto line = manifest_line(r);
  const auto back = parse_manifest_line(line);
  CHECK(manifest_line(back) == line);
  CHECK(back.source == OcclusionSource::Texture);

  CHECK_THROWS_AS(parse_manifest_line("{\"sample_id\": 3}"), InvalidInput);

  DatasetManifest m;
  m.root = std::filesystem::temp_directory_path() / "facemat_nonexistent_dir";
  ManifestRecord dup = r;
  dup.alphas.clear();
  m.records = {r, dup};
  const auto e1 = validate_manifest(m);
  std::swap(m.records[0], m.records[1]);
  CHECK(validate_manifest(m) == e1);
  CHECK(std::any_of(e1.begin(), e1.end(), [](const std::string& s) { return s.find("duplicate") != std::string::npos; }));
}
