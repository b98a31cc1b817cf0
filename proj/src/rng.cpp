#include "scatterfusion/rng.hpp"

#include <cmath>

namespace scatterfusion {

double Rng::normal() {
  // Box-Muller; resample u1 away from 0 so the log stays finite.
  double u1 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
  // Rejection sampling over the top bits; unbiased for n >= 1.
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return static_cast<std::int64_t>(v % un);
}

Tensor Rng::normal_tensor(const std::vector<std::int64_t>& shape, double stddev) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = normal() * stddev;
  return t;
}

Tensor Rng::uniform_tensor(const std::vector<std::int64_t>& shape, double lo, double hi) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = uniform(lo, hi);
  return t;
}

std::vector<std::int64_t> Rng::permutation(std::int64_t n) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::int64_t j = uniform_int(i + 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace scatterfusion
