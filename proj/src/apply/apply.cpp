#include "facemat/apply/apply.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "facemat/core/raster_io.hpp"
#include "facemat/distill/checkpoint.hpp"

namespace facemat::apply {
namespace {

using json = nlohmann::json;

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) throw InvalidInput("filter: bad " + what + " '" + s + "'");
  return v;
}

std::string number(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  if (h < 0.0) h += 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

}  // namespace

std::string FilterSpec::to_string() const {
  switch (kind) {
    case FilterKind::HueShift: return "hue:" + number(hue_deg);
    case FilterKind::Tint:
      return "tint:" + number(tint[0]) + "," + number(tint[1]) + "," + number(tint[2]) + "," + number(opacity);
    case FilterKind::ExternalFrames: return "external:" + external.string();
  }
  return "";
}

FilterSpec parse_filter(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw InvalidInput("filter '" + std::string(text) + "' must look like hue:DEG, tint:R,G,B,OPACITY or external:DIR");
  }
  const std::string kind(text.substr(0, colon)), arg(text.substr(colon + 1));
  FilterSpec s;
  if (kind == "hue") {
    s.kind = FilterKind::HueShift;
    s.hue_deg = parse_number(arg, "hue angle");
  } else if (kind == "tint") {
    s.kind = FilterKind::Tint;
    std::vector<double> v;
    std::stringstream ss(arg);
    for (std::string part; std::getline(ss, part, ',');) v.push_back(parse_number(part, "tint component"));
    if (v.size() != 4) throw InvalidInput("filter: tint needs 4 values R,G,B,OPACITY, got " + std::to_string(v.size()));
    for (double c : v) {
      if (c < 0.0 || c > 1.0) throw InvalidInput("filter: tint values must lie in [0,1]");
    }
    s.tint = {v[0], v[1], v[2]};
    s.opacity = v[3];
  } else if (kind == "external") {
    s.kind = FilterKind::ExternalFrames;
    if (arg.empty()) throw InvalidInput("filter: external needs a directory");
    s.external = arg;
  } else {
    throw InvalidInput("filter: unknown kind '" + kind + "' (expected hue, tint or external)");
  }
  return s;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AlphaMatte> predict_matte(std::span<const ImageFrame> frames, const model::MattingNet& net,
                                      model::Padding* applied) {
  std::vector<AlphaMatte> out;
  for (auto& b : model::predict_padded(net, frames, applied)) {
    for (double& v : b.alpha_mean.values()) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(b.alpha_mean));
  }
  return out;
}

ImageFrame hue_shift(const ImageFrame& f, double degrees) {
  const double turns = std::fmod(degrees, 360.0);
  if (turns == 0.0) return f;
  const double dh = turns / 60.0;
  ImageFrame out(f.height(), f.width());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      double h, s, v, r, g, b;
      rgb_to_hsv(f(0, y, x), f(1, y, x), f(2, y, x), h, s, v);
      h = std::fmod(h + dh + 12.0, 6.0);
      hsv_to_rgb(h, s, v, r, g, b);
      out(0, y, x) = std::clamp(r, 0.0, 1.0);
      out(1, y, x) = std::clamp(g, 0.0, 1.0);
      out(2, y, x) = std::clamp(b, 0.0, 1.0);
    }
  }
  return out;
}

ImageFrame tint(const ImageFrame& f, const std::array<double, 3>& color, double opacity) {
  ImageFrame out = f;
  for (int c = 0; c < 3; ++c) {
    for (double& v : out.plane(c).values()) v = (1.0 - opacity) * v + opacity * color[c];
  }
  return out;
}

std::vector<ImageFrame> transform_face(std::span<const ImageFrame> frames, const FilterSpec& spec) {
  std::vector<ImageFrame> out;
  switch (spec.kind) {
    case FilterKind::HueShift:
      for (const auto& f : frames) out.push_back(hue_shift(f, spec.hue_deg));
      break;
    case FilterKind::Tint:
      for (const auto& f : frames) out.push_back(tint(f, spec.tint, spec.opacity));
      break;
    case FilterKind::ExternalFrames: {
      const auto files = list_frames(spec.external);
      if (files.size() != frames.size()) {
        throw InvalidInput("external filter has " + std::to_string(files.size()) + " frames, input has " +
                           std::to_string(frames.size()));
      }
      for (std::size_t i = 0; i < files.size(); ++i) {
        out.push_back(load_image(files[i]));
        require_same_shape(out.back(), frames[i], "external frame size differs from the input frame");
      }
      break;
    }
  }
  return out;
}

std::vector<ImageFrame> composite_filter(std::span<const ImageFrame> original, std::span<const ImageFrame> transformed,
                                         std::span<const AlphaMatte> alphas) {
  if (original.size() != transformed.size() || original.size() != alphas.size()) {
    throw InvalidInput("composite_filter: sequence lengths differ");
  }
  std::vector<ImageFrame> out;
  for (std::size_t t = 0; t < original.size(); ++t) {
    require_same_shape(original[t], transformed[t], "composite_filter: frame sizes differ");
    require_same_shape(original[t], alphas[t], "composite_filter: matte size differs from frame");
    ImageFrame o(original[t].height(), original[t].width());
    for (int c = 0; c < 3; ++c) {
      const Field &a = alphas[t], &src = original[t].plane(c), &dst = transformed[t].plane(c);
      Field& p = o.plane(c);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = a[i] * dst[i] + (1.0 - a[i]) * src[i];
    }
    out.push_back(std::move(o));
  }
  return out;
}

PipelineResult run_pipeline(const std::filesystem::path& frames_dir, const std::filesystem::path& checkpoint,
                            const FilterSpec& spec, const std::filesystem::path& out_dir,
                            const CompletionFn& completion) {
  namespace fs = std::filesystem;
  PipelineResult res;
  std::vector<fs::path> files;
  std::vector<ImageFrame> frames;
  staged("load", [&] {
    files = list_frames(frames_dir);
    if (files.empty()) throw InvalidInput("no .png frames in " + frames_dir.string());
    for (const auto& f : files) frames.push_back(load_image(f));
    for (const auto& f : frames) require_same_shape(frames[0], f, "input frames differ in size");
  });
  std::vector<AlphaMatte> alphas;
  staged("matting", [&] {
    const model::MattingNet net = distill::load_model(checkpoint);
    res.checkpoint_hash = distill::file_hash(checkpoint);
    alphas = predict_matte(frames, net, &res.padding);
  });
  if (res.padding.any()) {
    res.notices.push_back("input padded by " + std::to_string(res.padding.bottom) + " rows and " +
                          std::to_string(res.padding.right) + " columns for matting, then cropped");
  }
  std::vector<ImageFrame> completed = staged("completion", [&] {
    if (completion) return completion(frames, alphas);
    return frames;
  });
  if (!completion) res.notices.push_back("completion stage is a pass-through stub; occluded face regions are not inpainted");
  if (completed.size() != frames.size()) throw PipelineError("completion", "frame count changed");
  const auto transformed = staged("transform", [&] { return transform_face(completed, spec); });
  const auto out = staged("composite", [&] { return composite_filter(frames, transformed, alphas); });
  staged("write", [&] {
    fs::create_directories(out_dir / kFramesDir);
    fs::create_directories(out_dir / kMattesDir);
    json names = json::array();
    for (std::size_t t = 0; t < files.size(); ++t) {
      const auto name = files[t].filename();
      save_image(out_dir / kFramesDir / name, out[t]);
      save_matte(out_dir / kMattesDir / name, alphas[t]);
      names.push_back(name.string());
    }
    json meta = {{"filter", spec.to_string()},
                 {"checkpoint_hash", res.checkpoint_hash},
                 {"padding", {{"bottom", res.padding.bottom}, {"right", res.padding.right}}},
                 {"frames", names},
                 {"completion", completion ? "custom" : "pass-through"},
                 {"notices", res.notices}};
    std::ofstream m(out_dir / kMetadataFile, std::ios::trunc);
    if (!m) throw std::runtime_error("cannot write " + (out_dir / kMetadataFile).string());
    m << meta.dump(2) << "\n";
  });
  res.frames = static_cast<int>(frames.size());
  return res;
}

}  // namespace facemat::apply
