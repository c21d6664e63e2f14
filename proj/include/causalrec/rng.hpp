#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace causalrec {

/// Derives an independent stream seed from a root seed and a subsystem tag
/// (splitmix64 over root ^ fnv1a(tag)), so one root seed reproduces every
/// random stream in a run.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

/// Seeded generator passed explicitly wherever randomness is consumed.
/// Distributions are implemented here rather than via <random> adaptors so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi], unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  Rng split(std::string_view tag) { return Rng(derive_seed(engine_(), tag)); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace causalrec
