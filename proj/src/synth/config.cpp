#include "facemat/synth/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace facemat::synth {

std::vector<RatioStep> parse_ratio_schedule(const std::string& text) {
  std::vector<RatioStep> out;
  if (text.empty() || text == "fixed") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw InvalidInput("ratio_schedule: expected epoch:ratio, got '" + item + "'");
    }
    RatioStep s;
    try {
      s.epoch = std::stoi(item.substr(0, colon));
      s.ratio = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidInput("ratio_schedule: cannot parse '" + item + "'");
    }
    out.push_back(s);
  }
  return out;
}

std::string format_ratio_schedule(const std::vector<RatioStep>& s) {
  if (s.empty()) return "fixed";
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i].epoch << ':' << s[i].ratio;
  }
  return os.str();
}

double SynthConfig::motion_magnitude() const {
  return std::min(1.0, motion_rate * std::max(0, clip_length - 1));
}

std::vector<std::string> SynthConfig::validate() const {
  std::vector<std::string> e;
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) e.push_back(std::string(name) + " must be in [0,1], got " + std::to_string(v));
  };
  unit(occlusion_ratio, "occlusion_ratio");
  unit(test_fraction, "test_fraction");
  unit(flip_prob, "flip_prob");
  unit(pause_prob, "pause_prob");
  unit(min_area, "min_area");
  unit(max_area, "max_area");
  if (min_area > max_area) e.push_back("min_area must not exceed max_area");
  if (size < 64) e.push_back("size must be >= 64, got " + std::to_string(size));
  if (n < 1) e.push_back("n must be >= 1, got " + std::to_string(n));
  if (clip_length < 1) e.push_back("clip_length must be >= 1, got " + std::to_string(clip_length));
  if (erode_r < 1) e.push_back("erode_r must be >= 1");
  if (dilate_r < 1) e.push_back("dilate_r must be >= 1");
  if (!(blur_sigma > 0.0)) e.push_back("blur_sigma must be > 0");
  if (!(scale_min > 0.0) || scale_max < scale_min) e.push_back("scale range must satisfy 0 < scale_min <= scale_max");
  if (rotation_deg < 0 || jitter_brightness < 0 || jitter_contrast < 0 || jitter_saturation < 0) {
    e.push_back("augmentation magnitudes must be >= 0");
  }
  if (motion_rate < 0 || motion_translate < 0 || motion_rotate_deg < 0 || motion_scale < 0 || motion_scale >= 1) {
    e.push_back("motion magnitudes must be >= 0 (motion_scale < 1)");
  }
  if (workers < 0) e.push_back("workers must be >= 0");
  int prev_epoch = -1;
  for (const auto& s : ratio_schedule) {
    unit(s.ratio, "ratio_schedule ratio");
    if (s.epoch <= prev_epoch) e.push_back("ratio_schedule epochs must be strictly increasing");
    prev_epoch = s.epoch;
  }
  if (!ratio_schedule.empty() && ratio_schedule.front().epoch != 0) {
    e.push_back("ratio_schedule must start at epoch 0");
  }
  if (sources.empty()) e.push_back("at least one occlusion source must be enabled");
  for (auto s : sources) {
    if (s == OcclusionSource::None) e.push_back("'none' is not an occlusion source");
  }
  return e;
}

}  // namespace facemat::synth
