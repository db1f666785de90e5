#include "facemat/synth/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "facemat/core/raster_io.hpp"
#include "facemat/synth/compose.hpp"
#include "facemat/synth/generators.hpp"

namespace facemat::synth {
namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string s = "invalid configuration:";
  for (const auto& x : p) s += "\n  - " + x;
  return s;
}

AffineTransform horizontal_flip(int width) {
  AffineTransform f;
  f.m[0][0] = -1.0;
  f.m[0][2] = width - 1.0;
  return f;
}

std::string frame_name(const char* prefix, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d.png", prefix, t);
  return buf;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

Layer place_occlusion(const OcclusionAsset& asset, int height, int width, Rng& rng, const SynthConfig& cfg,
                      const std::optional<FixedPlacement>& fixed) {
  require_same_shape(asset.color, asset.alpha, "place_occlusion");
  const int ah = asset.alpha.height(), aw = asset.alpha.width();
  const double acx = (aw - 1) / 2.0, acy = (ah - 1) / 2.0;
  constexpr int kMaxRetries = 24;
  double shrink = 1.0;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    double scale, angle = 0.0;
    bool flip = false;
    int ox, oy;
    if (fixed) {
      scale = fixed->scale * shrink;
      ox = static_cast<int>(std::lround(fixed->cx * width - acx));
      oy = static_cast<int>(std::lround(fixed->cy * height - acy));
    } else {
      scale = rng.uniform(cfg.scale_min, cfg.scale_max) * shrink;
      if (cfg.rotation_deg > 0) angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
      flip = cfg.flip_prob > 0 && rng.bernoulli(cfg.flip_prob);
      // Offsets keep the asset centre on the canvas.
      ox = rng.uniform_int(static_cast<int>(std::ceil(-acx)), static_cast<int>(std::floor(width - 1 - acx)));
      oy = rng.uniform_int(static_cast<int>(std::ceil(-acy)), static_cast<int>(std::floor(height - 1 - acy)));
    }
    if (aw * scale > width || ah * scale > height) {
      shrink *= 0.85;
      continue;
    }
    AffineTransform a = AffineTransform::similarity(acx, acy, angle, scale, ox, oy);
    if (flip) a = a.compose(horizontal_flip(aw));
    const ImageFrame jittered = fixed ? asset.color : color_jitter(asset.color, rng, cfg);
    Layer layer{warp(jittered, a, Padding::Edge, height, width), warp(asset.alpha, a, Padding::Zero, height, width)};
    const double area = area_fraction(layer.alpha);
    if (area > cfg.max_area) {
      shrink *= 0.85;
      continue;
    }
    if (area < cfg.min_area) {
      // Mostly off-canvas or too small. The grow and shrink factors are not
      // reciprocal, so the search cannot cycle between two scales.
      shrink *= 1.15;
      continue;
    }
    return layer;
  }
  throw Rejected("place_occlusion: no placement within area bounds after retries");
}

AnimatedClip animate_clip(const ImageFrame& face, const AlphaMatte& skin_mask, const ImageFrame& occ_color,
                          const AlphaMatte& occ_alpha, const AffineTransform& a0, const AffineTransform& a1,
                          const AnimateOptions& opt, Rng& rng) {
  require_same_shape(face, skin_mask, "animate_clip");
  require_same_shape(face, occ_color, "animate_clip");
  require_same_shape(face, occ_alpha, "animate_clip");
  if (opt.length < 1) throw InvalidInput("animate_clip: T must be >= 1");
  if (!a0.valid() || !a1.valid()) throw InvalidInput("animate_clip: invalid affine transform");

  const double skin_area = area_fraction(skin_mask);
  AnimatedClip clip;
  int k = 0;
  for (int t = 0; t < opt.length; ++t) {
    if (t > 0) {
      const bool pause = opt.pause_prob > 0 && rng.bernoulli(opt.pause_prob);
      if (!pause) k = t;
    }
    const AffineTransform a = interp_affine(a0, a1, k, opt.length);
    const bool identity = a == AffineTransform::identity();
    ImageFrame f = face, oc = occ_color;
    AlphaMatte s = skin_mask, oa = occ_alpha;
    if (!identity) {
      if (opt.target == MotionTarget::Face) {
        f = warp(face, a, Padding::Edge);
        s = warp(skin_mask, a, Padding::Zero);
      } else {
        oc = warp(occ_color, a, Padding::Edge);
        oa = warp(occ_alpha, a, Padding::Zero);
      }
    }
    if (skin_area > 0 && area_fraction(s) < 0.5 * skin_area) {
      throw Rejected("animate_clip: face pushed off-canvas");
    }
    AlphaMatte alpha = make_face_alpha(s, oa);
    clip.sample.frames.push_back(composite_pixelwise(oc, f, oa));
    clip.sample.trimaps.push_back(gen_trimap(alpha, opt.erode_r, opt.dilate_r));
    clip.sample.alphas.push_back(std::move(alpha));
    clip.face_layers.push_back(std::move(f));
    clip.skin_layers.push_back(std::move(s));
    clip.occ_color_layers.push_back(std::move(oc));
    clip.occ_alpha_layers.push_back(std::move(oa));
    clip.transforms.push_back(a);
  }
  return clip;
}

std::pair<AffineTransform, AffineTransform> sample_motion(Rng& rng, const SynthConfig& cfg, int size) {
  const double m = cfg.motion_magnitude();
  const double c = (size - 1) / 2.0;
  auto one = [&] {
    const double ang = rng.uniform(-cfg.motion_rotate_deg, cfg.motion_rotate_deg) * m;
    const double sc = 1.0 + rng.uniform(-cfg.motion_scale, cfg.motion_scale) * m;
    const double tx = rng.uniform(-cfg.motion_translate, cfg.motion_translate) * size * m;
    const double ty = rng.uniform(-cfg.motion_translate, cfg.motion_translate) * size * m;
    return AffineTransform::similarity(c, c, ang, sc, tx, ty);
  };
  auto a0 = one();
  auto a1 = one();
  return {a0, a1};
}

std::vector<OcclusionAsset> load_assets(const std::filesystem::path& dir, OcclusionSource source) {
  namespace fs = std::filesystem;
  std::vector<OcclusionAsset> out;
  const fs::path base = dir / std::string(to_string(source));
  if (!fs::is_directory(base / "color") || !fs::is_directory(base / "alpha")) return out;
  std::vector<fs::path> colors;
  for (const auto& e : fs::directory_iterator(base / "color")) {
    if (e.path().extension() == ".png") colors.push_back(e.path());
  }
  std::sort(colors.begin(), colors.end());
  for (const auto& c : colors) {
    const fs::path a = base / "alpha" / c.filename();
    if (!fs::exists(a)) continue;
    OcclusionAsset asset{load_image(c), load_matte(a), source};
    require_same_shape(asset.color, asset.alpha, ("asset " + c.string()).c_str());
    if (source == OcclusionSource::HardMask) {
      for (double& v : asset.alpha.values()) v = v >= 0.5 ? 1.0 : 0.0;
    }
    out.push_back(std::move(asset));
  }
  return out;
}

AssetPool::AssetPool(const SynthConfig& cfg) : builtin_(cfg.builtin_assets) {
  std::vector<std::string> problems;
  for (auto s : cfg.sources) {
    if (!cfg.asset_dir.empty()) files_[s] = load_assets(cfg.asset_dir, s);
    if (files_[s].empty() && !builtin_) {
      problems.push_back("empty asset pool for enabled source '" + std::string(to_string(s)) + "'");
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
}

std::size_t AssetPool::file_count(OcclusionSource source) const {
  auto it = files_.find(source);
  return it == files_.end() ? 0 : it->second.size();
}

OcclusionAsset AssetPool::draw(OcclusionSource source, Rng& rng, int canvas) const {
  auto it = files_.find(source);
  if (it != files_.end() && !it->second.empty()) {
    const auto& v = it->second;
    return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
  }
  if (!builtin_) throw ConfigError({"empty asset pool for source '" + std::string(to_string(source)) + "'"});
  return builtin_asset(source, rng, canvas);
}

int occluded_count(int n, double ratio) { return static_cast<int>(std::lround(ratio * n)); }

AnimatedClip generate_sample(const SynthConfig& cfg, const AssetPool& pool, const std::string& base_id, Split split,
                             int index, bool occluded, OcclusionSource* source_out) {
  const int size = cfg.size;
  Rng face_rng = substream(cfg.seed, base_id + "/face");
  ProceduralFace face = gen_procedural_face(face_rng, size);

  Layer occ{ImageFrame(size, size), AlphaMatte(size, size, 0.0)};
  OcclusionSource source = OcclusionSource::None;
  const bool test = split == Split::Test;
  if (occluded) {
    Rng occ_rng = substream(cfg.seed, base_id + "/occ");
    source = cfg.sources[static_cast<std::size_t>(occ_rng.uniform_int(0, static_cast<int>(cfg.sources.size()) - 1))];
    std::optional<FixedPlacement> fixed;
    if (test) {
      static constexpr double kAnchors[4][2] = {{0.35, 0.35}, {0.65, 0.35}, {0.5, 0.7}, {0.3, 0.65}};
      fixed = FixedPlacement{0.8, kAnchors[index % 4][0], kAnchors[index % 4][1]};
    }
    constexpr int kAssetAttempts = 4;
    for (int attempt = 0;; ++attempt) {
      const OcclusionAsset asset = pool.draw(source, occ_rng, size);
      try {
        occ = place_occlusion(asset, size, size, occ_rng, cfg, fixed);
        break;
      } catch (const Rejected&) {
        if (attempt + 1 == kAssetAttempts) throw;
      }
    }
    if (source == OcclusionSource::HardMask) {
      for (double& v : occ.alpha.values()) v = v >= 0.5 ? 1.0 : 0.0;
      occ.alpha = blur_mask_boundary(occ.alpha, cfg.blur_sigma);
    }
  }
  if (source_out) *source_out = source;

  AnimateOptions opt;
  opt.length = cfg.clip_length;
  opt.erode_r = cfg.erode_r;
  opt.dilate_r = cfg.dilate_r;
  constexpr int kMotionAttempts = 8;
  for (int attempt = 0; attempt < kMotionAttempts; ++attempt) {
    Rng motion_rng = substream(cfg.seed, base_id + "/motion/" + std::to_string(attempt));
    AffineTransform a0, a1;
    if (test) {
      // Fixed benchmark motion: a small horizontal drift.
      const double dx = (index % 2 ? -1.0 : 1.0) * cfg.motion_translate * size * cfg.motion_magnitude();
      a1 = AffineTransform::translation(dx, 0.0);
      opt.pause_prob = 0.0;
    } else {
      std::tie(a0, a1) = sample_motion(motion_rng, cfg, size);
      opt.pause_prob = cfg.pause_prob;
    }
    opt.target = occluded && motion_rng.bernoulli(0.5) ? MotionTarget::Occluder : MotionTarget::Face;
    try {
      AnimatedClip clip = animate_clip(face.image, face.skin, occ.color, occ.alpha, a0, a1, opt, motion_rng);
      clip.sample.meta.source = source;
      clip.sample.meta.seed = cfg.seed;
      return clip;
    } catch (const Rejected&) {
      continue;
    }
  }
  // Fall back to a static clip.
  Rng still(0);
  opt.pause_prob = 0.0;
  AnimatedClip clip = animate_clip(face.image, face.skin, occ.color, occ.alpha, AffineTransform::identity(),
                                   AffineTransform::identity(), opt, still);
  clip.sample.meta.source = source;
  clip.sample.meta.seed = cfg.seed;
  return clip;
}

DatasetManifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir, SynthSummary* summary) {
  namespace fs = std::filesystem;
  if (auto problems = cfg.validate(); !problems.empty()) throw ConfigError(problems);
  const AssetPool pool(cfg);

  std::vector<RatioStep> stages = cfg.ratio_schedule;
  if (stages.empty()) stages.push_back({0, cfg.occlusion_ratio});

  const int n_test = static_cast<int>(std::lround(cfg.n * cfg.test_fraction));
  const int n_train = cfg.n - n_test;

  struct Job {
    Split split;
    int index;
    int stage;
    bool occluded;
    std::string base_id;
    std::string sample_id;
  };
  std::vector<Job> jobs;
  for (Split split : {Split::Train, Split::Test}) {
    const int count = split == Split::Train ? n_train : n_test;
    if (count == 0) continue;
    // Occluder assignment order is independent of the ratio, so larger
    // ratios occlude a superset of the samples.
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = substream(cfg.seed, std::string("order/") + std::string(to_string(split)));
    for (int i = count - 1; i > 0; --i) std::swap(order[i], order[order_rng.uniform_int(0, i)]);
    std::vector<int> rank(count);
    for (int r = 0; r < count; ++r) rank[order[r]] = r;

    for (std::size_t k = 0; k < stages.size(); ++k) {
      const int occ_n = occluded_count(count, stages[k].ratio);
      for (int i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%05d", std::string(to_string(split)).c_str(), i);
        std::string sid = id;
        if (stages.size() > 1) sid = std::string(to_string(split)) + "_s" + std::to_string(k) + sid.substr(sid.find('_'));
        jobs.push_back({split, i, static_cast<int>(k), rank[i] < occ_n, id, sid});
      }
    }
  }

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.records.resize(jobs.size());
  std::vector<OcclusionSource> sources(jobs.size(), OcclusionSource::None);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      try {
        const Job& job = jobs[j];
        OcclusionSource src;
        AnimatedClip clip = generate_sample(cfg, pool, job.base_id, job.split, job.index, job.occluded, &src);
        sources[j] = src;
        const fs::path rel = fs::path(std::string(to_string(job.split))) / job.sample_id;
        fs::create_directories(out_dir / rel);
        ManifestRecord& r = manifest.records[j];
        r.sample_id = job.sample_id;
        r.base_id = job.base_id;
        r.split = job.split;
        r.source = src;
        r.seed = cfg.seed;
        r.ratio = stages[static_cast<std::size_t>(job.stage)].ratio;
        r.stage = job.stage;
        r.epoch_start = stages[static_cast<std::size_t>(job.stage)].epoch;
        for (int t = 0; t < static_cast<int>(clip.sample.length()); ++t) {
          const auto f = (rel / frame_name("frame", t)).generic_string();
          const auto a = (rel / frame_name("alpha", t)).generic_string();
          const auto m = (rel / frame_name("trimap", t)).generic_string();
          save_image(out_dir / f, clip.sample.frames[t]);
          save_matte(out_dir / a, clip.sample.alphas[t]);
          save_trimap(out_dir / m, clip.sample.trimaps[t]);
          r.frames.push_back(f);
          r.alphas.push_back(a);
          r.trimaps.push_back(m);
          if (cfg.write_layers) {
            save_image(out_dir / rel / frame_name("face", t), clip.face_layers[t]);
            save_matte(out_dir / rel / frame_name("skin", t), clip.skin_layers[t]);
            save_image(out_dir / rel / frame_name("occcolor", t), clip.occ_color_layers[t]);
            save_matte(out_dir / rel / frame_name("occalpha", t), clip.occ_alpha_layers[t]);
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(jobs.size());
        return;
      }
    }
  };
  const int workers = std::max(1, cfg.workers == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : cfg.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < workers; ++w) pool_threads.emplace_back(worker);
    for (auto& t : pool_threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  write_manifest(out_dir / "manifest.jsonl", manifest);
  if (summary) {
    *summary = {};
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].stage != 0) continue;
      (jobs[j].split == Split::Train ? summary->train : summary->test)++;
      if (jobs[j].occluded) {
        summary->occluded++;
        summary->per_source[std::string(to_string(sources[j]))]++;
      }
    }
  }
  return manifest;
}

}  // namespace facemat::synth
