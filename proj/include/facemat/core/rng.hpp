#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace facemat {

/// Deterministic random stream. Draws are derived from raw 64-bit engine
/// output so that values do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Engine state as text; restore() reproduces the stream exactly.
  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

inline Rng seeded_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

/// Independent stream for one named purpose (sample id, layer tag...).
/// Depends only on (seed, key), never on generation order.
Rng substream(std::uint64_t seed, std::string_view key);

}  // namespace facemat
