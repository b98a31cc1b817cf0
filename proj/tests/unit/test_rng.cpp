#include <cmath>

#include "doctest.h"
#include "scatterfusion/rng.hpp"

using namespace scatterfusion;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(42), d(43);
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs = differs || (c.uniform() != d.uniform());
  CHECK(differs);
}

TEST_CASE("uniform stays in the half-open unit interval") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal moments are roughly standard") {
  Rng r(1234);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.03);
}

TEST_CASE("uniform_int covers its range") {
  Rng r(99);
  std::vector<int> hits(6, 0);
  for (int i = 0; i < 6000; ++i) {
    const long v = r.uniform_int(6);
    REQUIRE(v >= 0);
    REQUIRE(v < 6);
    hits[static_cast<std::size_t>(v)]++;
  }
  for (int h : hits) CHECK(h > 0);
}

TEST_CASE("permutation is a bijection") {
  Rng r(5);
  auto p = r.permutation(50);
  std::vector<bool> seen(50, false);
  for (long i : p) {
    REQUIRE(i >= 0);
    REQUIRE(i < 50);
    CHECK(!seen[static_cast<std::size_t>(i)]);
    seen[static_cast<std::size_t>(i)] = true;
  }
}

TEST_CASE("derive_seed separates streams") {
  const auto a = derive_seed(123, 0);
  const auto b = derive_seed(123, 1);
  const auto c = derive_seed(124, 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(derive_seed(123, 0) == a);
}
