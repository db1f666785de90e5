#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "facemat/core/rng.hpp"
#include "facemat/core/types.hpp"

namespace facemat::testing {

inline Field random_field(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  Field f(h, w);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

inline Mask random_mask(Rng& rng, int h, int w, double p = 0.5) {
  Mask m(h, w);
  for (auto& v : m.values()) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

inline ImageFrame random_image(Rng& rng, int h, int w) {
  ImageFrame f(h, w);
  for (int c = 0; c < 3; ++c) f.plane(c) = random_field(rng, h, w);
  return f;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("facemat_" + tag + "_" + std::to_string(fnv1a64(tag) ^ static_cast<std::uint64_t>(::getpid())));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace facemat::testing
