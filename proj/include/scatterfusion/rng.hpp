#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Deterministic random source. Gaussian samples use an explicit Box-Muller
// pinned here instead of std::normal_distribution, whose output is
// implementation-defined; this keeps seeded runs bitwise reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, one sample per call (the cosine branch).
  double normal();

  std::int64_t uniform_int(std::int64_t n);  // [0, n)

  Tensor normal_tensor(const std::vector<std::int64_t>& shape, double stddev = 1.0);
  Tensor uniform_tensor(const std::vector<std::int64_t>& shape, double lo = 0.0, double hi = 1.0);

  // Fisher-Yates over indices 0..n-1.
  std::vector<std::int64_t> permutation(std::int64_t n);

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Stable derived seed for (seed, stream) pairs, e.g. per-epoch shuffles.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace scatterfusion
