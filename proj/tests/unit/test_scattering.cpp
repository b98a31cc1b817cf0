#include <cmath>

#include "doctest.h"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/gradcheck.hpp"
#include "scatterfusion/scattering.hpp"
#include "support/signals.hpp"

using namespace scatterfusion;
using testsupport::bandlimited_signal;
using testsupport::kTwoPi;
using testsupport::sinusoidal_tau;

namespace {

double l2(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data) s += v * v;
  return std::sqrt(s);
}

double coeff_norm(const ScatteringCoefficients& c) {
  double s = 0.0;
  for (double v : c.s0.data) s += v * v;
  for (const auto& t : c.s1)
    for (double v : t.data) s += v * v;
  for (const auto& t : c.s2)
    for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

Tensor sinusoid(long T, double omega, double phase = 0.3) {
  Tensor x = Tensor::zeros({T, 1});
  for (long t = 0; t < T; ++t)
    x.data[static_cast<std::size_t>(t)] = std::sin(omega * static_cast<double>(t) + phase);
  return x;
}

double morlet_center(long j) { return 0.75 * 3.14159265358979323846 / std::pow(2.0, j); }

}  // namespace

TEST_CASE("path enumeration") {
  const auto p3 = scattering_paths(3);
  REQUIRE(p3.size() == 3);
  CHECK(p3[0] == std::pair<long, long>{1, 2});
  CHECK(p3[1] == std::pair<long, long>{1, 3});
  CHECK(p3[2] == std::pair<long, long>{2, 3});
  CHECK(scattering_paths(4).size() == 6);  // 1 + J + P = 11 groups at J = 4
}

TEST_CASE("scatter0 preserves constants and averages noise") {
  const auto bank = build_filterbank(4, 512, 7);
  ScatterOptions opt;
  opt.subsample = false;

  Tensor c = Tensor::full({512, 1}, 2.5);
  const auto s0 = scatter0(c, bank, opt);
  for (double v : s0.data) CHECK(std::fabs(v - 2.5) < 1e-10);

  // The packed FFT path leaves ~1e-17 residue on an all-zero input; the
  // direct path is exactly zero.
  Tensor z = Tensor::zeros({512, 1});
  for (double v : scatter0(z, bank, opt).data) CHECK(std::fabs(v) < 1e-12);
  ScatterOptions direct = opt;
  direct.path = ConvPath::Direct;
  for (double v : scatter0(z, bank, direct).data) CHECK(v == 0.0);

  Rng r(71);
  Tensor noise = Tensor::zeros({512, 1});
  for (double& v : noise.data) v = r.normal();
  const auto s0n = scatter0(noise, bank, opt);
  double var_x = 0.0, var_s = 0.0;
  for (double v : noise.data) var_x += v * v;
  for (double v : s0n.data) var_s += v * v;
  CHECK(var_s / var_x < 0.2);
}

TEST_CASE("first order kills constants and locates sinusoid scales") {
  const auto bank = build_filterbank(4, 512, 7);
  ScatterOptions opt;
  opt.subsample = false;

  Tensor c = Tensor::full({512, 1}, 5.0);
  auto [w1c, s1c] = scatter1(c, bank, opt);
  double norm = 0.0;
  for (const auto& s : s1c)
    for (double v : s.data) norm += v * v;
  CHECK(std::sqrt(norm) / 5.0 < 1e-5);

  for (long jstar : {1L, 2L, 3L}) {
    const Tensor x = sinusoid(512, morlet_center(jstar));
    auto [w1, s1] = scatter1(x, bank, opt);
    long best = 0;
    double best_norm = -1.0;
    for (long j = 0; j < 4; ++j) {
      const double n = l2(s1[static_cast<std::size_t>(j)]);
      if (n > best_norm) {
        best_norm = n;
        best = j + 1;
      }
    }
    CHECK(best == jstar);
  }
}

TEST_CASE("scaling: s0 is linear, s1 and s2 are one-homogeneous") {
  Rng r(72);
  const auto bank = build_filterbank(3, 256, 7);
  Tensor x = bandlimited_signal(r, 256, 12, 40, 5, 32);
  const auto base = full_scattering_channel(x, bank);
  for (double alpha : {-2.0, 0.5, 3.0}) {
    Tensor xs = x;
    for (double& v : xs.data) v *= alpha;
    const auto scaled = full_scattering_channel(xs, bank);
    auto check_pair = [](const Tensor& s, const Tensor& b, double factor) {
      for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double want = factor * b.data[i];
        CHECK(std::fabs(s.data[i] - want) <= 1e-10 * std::max(1.0, std::fabs(want)));
      }
    };
    check_pair(scaled.s0, base.s0, alpha);
    const double a = std::fabs(alpha);
    for (std::size_t j = 0; j < base.s1.size(); ++j) check_pair(scaled.s1[j], base.s1[j], a);
    for (std::size_t p = 0; p < base.s2.size(); ++p) check_pair(scaled.s2[p], base.s2[p], a);
  }

  // Doubling is bitwise on the direct path: every intermediate value scales
  // by an exact power of two.
  ScatterOptions direct;
  direct.subsample = false;
  direct.path = ConvPath::Direct;
  Tensor x2 = x;
  for (double& v : x2.data) v *= 2.0;
  auto [w1a, s1a] = scatter1(x, bank, direct);
  auto [w1b, s1b] = scatter1(x2, bank, direct);
  for (std::size_t j = 0; j < s1a.size(); ++j)
    for (std::size_t i = 0; i < s1a[j].data.size(); ++i)
      CHECK(s1b[j].data[i] == 2.0 * s1a[j].data[i]);
}

TEST_CASE("second order is nonnegative, kills constants, and finds modulation") {
  const auto bank = build_filterbank(4, 1024, 7);
  ScatterOptions opt;
  opt.subsample = false;

  Tensor z = Tensor::zeros({1024, 1});
  auto [w1z, s1z] = scatter1(z, bank, opt);
  for (const auto& s : scatter2(w1z, bank, opt))
    for (double v : s.data) CHECK(std::fabs(v) < 1e-12);

  Tensor c = Tensor::full({1024, 1}, 4.0);
  auto [w1c, s1c] = scatter1(c, bank, opt);
  double norm = 0.0;
  for (const auto& s : scatter2(w1c, bank, opt))
    for (double v : s.data) norm += v * v;
  CHECK(std::sqrt(norm) / 4.0 < 1e-5);

  // Carrier at scale 1, envelope at scale 3.
  const double wc = morlet_center(1), we = morlet_center(3);
  Tensor am = Tensor::zeros({1024, 1});
  for (long t = 0; t < 1024; ++t)
    am.data[static_cast<std::size_t>(t)] =
        (1.0 + 0.8 * std::cos(we * static_cast<double>(t))) * std::cos(wc * static_cast<double>(t));
  const auto coeffs = full_scattering_channel(am, bank, opt);
  std::size_t best = 0;
  double best_norm = -1.0;
  for (std::size_t p = 0; p < coeffs.s2.size(); ++p) {
    const double n = l2(coeffs.s2[p]);
    if (n > best_norm) {
      best_norm = n;
      best = p;
    }
  }
  CHECK(coeffs.path_index[best] == std::pair<long, long>{1, 3});

  for (const auto& s : coeffs.s1)
    for (double v : s.data) CHECK(v >= -1e-12);
  for (const auto& s : coeffs.s2)
    for (double v : s.data) CHECK(v >= -1e-12);
}

TEST_CASE("channels are independent and identically treated") {
  Rng r(73);
  const auto bank = build_filterbank(3, 128, 7);
  Tensor two = Tensor::zeros({128, 2});
  for (long t = 0; t < 128; ++t) {
    const double v = r.normal();
    two.at(t, 0) = v;
    two.at(t, 1) = v;
  }
  const auto coeffs = full_scattering(two, bank);
  REQUIRE(coeffs.size() == 2);
  CHECK(coeffs[0].s0.data == coeffs[1].s0.data);
  for (std::size_t j = 0; j < coeffs[0].s1.size(); ++j)
    CHECK(coeffs[0].s1[j].data == coeffs[1].s1[j].data);
  for (std::size_t p = 0; p < coeffs[0].s2.size(); ++p)
    CHECK(coeffs[0].s2[p].data == coeffs[1].s2[p].data);

  // Swapping channels swaps coefficient sets.
  Tensor ab = Tensor::zeros({128, 2});
  for (long t = 0; t < 128; ++t) {
    ab.at(t, 0) = r.normal();
    ab.at(t, 1) = r.normal();
  }
  Tensor ba = Tensor::zeros({128, 2});
  for (long t = 0; t < 128; ++t) {
    ba.at(t, 0) = ab.at(t, 1);
    ba.at(t, 1) = ab.at(t, 0);
  }
  const auto cab = full_scattering(ab, bank);
  const auto cba = full_scattering(ba, bank);
  CHECK(cab[0].s0.data == cba[1].s0.data);
  CHECK(cab[1].s0.data == cba[0].s0.data);
}

TEST_CASE("subsampled output length matches the stride") {
  const auto bank = build_filterbank(4, 96, 7);
  Tensor x = sinusoid(96, 0.4);
  const auto coeffs = full_scattering_channel(x, bank);  // stride 8
  CHECK(coeffs.t_out == 12);
  ScatterOptions opt;
  opt.subsample = false;
  CHECK(full_scattering_channel(x, bank, opt).t_out == 96);
}

TEST_CASE("parallel scattering matches serial") {
  Rng r(74);
  const auto bank = build_filterbank(3, 128, 7);
  Tensor x = Tensor::zeros({128, 3});
  for (double& v : x.data) v = r.normal();
  const auto serial = full_scattering(x, bank, {}, 1);
  const auto parallel = full_scattering(x, bank, {}, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(serial[c].s0.data == parallel[c].s0.data);
    for (std::size_t p = 0; p < serial[c].s2.size(); ++p)
      CHECK(serial[c].s2[p].data == parallel[c].s2[p].data);
  }
}

TEST_CASE("translation distance basics") {
  Rng r(75);
  const auto bank3 = build_filterbank(3, 1024, 7);
  const auto bank5 = build_filterbank(5, 1024, 7);
  Tensor x = bandlimited_signal(r, 1024, 50, 150, 6, 256);

  CHECK(translation_distance(x, 0, bank3) == 0.0);
  const double d3 = translation_distance(x, 16, bank3);
  const double d5 = translation_distance(x, 16, bank5);
  CHECK(d3 > 0.0);
  CHECK(d5 < d3);

  CHECK_THROWS_AS(translation_distance(x, 300, bank3), ContractError);
}

TEST_CASE("deformation field validation and pure shifts") {
  const long T = 1024;
  Rng r(76);
  Tensor x = bandlimited_signal(r, T, 50, 150, 6, 256);
  const auto bank = build_filterbank(4, T, 7);

  Tensor zero_tau = Tensor::zeros({T, 1});
  const auto field0 = make_deformation(zero_tau);
  CHECK(field0.max_slope == 0.0);
  CHECK(deformation_distance(x, field0, bank) == 0.0);

  Tensor const_tau = Tensor::full({T, 1}, 8.0);
  const auto shift_field = make_deformation(const_tau);
  CHECK(deformation_distance(x, shift_field, bank) ==
        doctest::Approx(translation_distance(x, 8, bank)).epsilon(1e-12));

  Tensor steep = Tensor::zeros({T, 1});
  for (long t = 0; t < T; ++t) steep.data[static_cast<std::size_t>(t)] = static_cast<double>(t);
  CHECK_THROWS_AS(make_deformation(steep), ContractError);
}

TEST_CASE("deformation distance scales linearly in the warp slope") {
  // Low-band signal plus a multi-cycle warp keeps both the interpolation
  // error and the phase excursion omega*tau far inside the linear regime.
  const long T = 1024;
  Rng r(77);
  Tensor x = bandlimited_signal(r, T, 8, 24, 5, 128);
  const auto bank = build_filterbank(4, T, 7);

  const auto f1 = make_deformation(sinusoidal_tau(T, 0.01, 0.9, 4));
  const auto f2 = make_deformation(sinusoidal_tau(T, 0.02, 0.9, 4));
  const double d1 = deformation_distance(x, f1, bank);
  const double d2 = deformation_distance(x, f2, bank);
  CHECK(d1 > 0.0);
  const double ratio = d2 / d1;
  CHECK(ratio > 1.7);
  CHECK(ratio < 2.3);
}

TEST_CASE("tape scattering matches the plain path at delta kernels") {
  Rng r(78);
  const long T = 128;
  const auto bank = build_filterbank(3, T, 7);
  Tensor x = bandlimited_signal(r, T, 8, 30, 4, 16);

  const auto plain = full_scattering_channel(x, bank);

  Tape tape;
  std::vector<Var> g_vars;
  for (const auto& g : bank.g) g_vars.push_back(tape.leaf(g));
  const auto filters = build_tape_filters(tape, bank, g_vars);
  const auto vars = scattering_tape(tape, tape.leaf(x), bank, filters, true);

  REQUIRE(vars.t_out == plain.t_out);
  for (std::size_t i = 0; i < plain.s0.data.size(); ++i)
    CHECK(tape.value(vars.s0).data[i] == doctest::Approx(plain.s0.data[i]).epsilon(1e-12));
  for (std::size_t j = 0; j < plain.s1.size(); ++j)
    for (std::size_t i = 0; i < plain.s1[j].data.size(); ++i)
      CHECK(tape.value(vars.s1[j]).data[i] == doctest::Approx(plain.s1[j].data[i]).epsilon(1e-12));
  for (std::size_t p = 0; p < plain.s2.size(); ++p)
    for (std::size_t i = 0; i < plain.s2[p].data.size(); ++i)
      CHECK(tape.value(vars.s2[p]).data[i] == doctest::Approx(plain.s2[p].data[i]).epsilon(1e-12));
}

TEST_CASE("gradients flow through tape scattering to the kernels") {
  Rng r(79);
  const long T = 64;
  const auto bank = build_filterbank(3, T, 7);
  Tensor x = bandlimited_signal(r, T, 4, 14, 3, 8);
  // Perturb kernels away from delta so the modulus is differentiable.
  std::vector<Tensor> gs = bank.g;
  for (auto& g : gs)
    for (double& v : g.data) v += 0.05 * r.normal();

  Tape t;
  std::vector<Var> g_vars;
  for (const auto& g : gs) g_vars.push_back(t.leaf(g));
  const auto filters = build_tape_filters(t, bank, g_vars);
  const auto vars = scattering_tape(t, t.leaf(x), bank, filters, true);
  Var total = t.scalar(0.0);
  total = t.add(total, t.sum_all(t.mul(vars.s0, vars.s0)));
  for (Var v : vars.s1) total = t.add(total, t.sum_all(t.mul(v, v)));
  for (Var v : vars.s2) total = t.add(total, t.sum_all(t.mul(v, v)));
  t.backward(total);
  std::vector<Tensor> grads;
  for (Var v : g_vars) grads.push_back(t.grad(v));

  auto f = [&](const std::vector<Tensor>& kernels) {
    Tape tt;
    std::vector<Var> gv;
    for (const auto& g : kernels) gv.push_back(tt.leaf(g));
    const auto fl = build_tape_filters(tt, bank, gv);
    const auto sv = scattering_tape(tt, tt.leaf(x), bank, fl, true);
    Var tot = tt.scalar(0.0);
    tot = tt.add(tot, tt.sum_all(tt.mul(sv.s0, sv.s0)));
    for (Var v : sv.s1) tot = tt.add(tot, tt.sum_all(tt.mul(v, v)));
    for (Var v : sv.s2) tot = tt.add(tot, tt.sum_all(tt.mul(v, v)));
    return tt.value(tot).data[0];
  };
  CHECK(finite_diff_check(f, gs, grads, 1e-6).max_rel_error < 1e-6);
}

TEST_CASE("full scattering norm is finite and positive on real signals") {
  Rng r(80);
  const auto bank = build_filterbank(4, 256, 7);
  Tensor x = bandlimited_signal(r, 256, 10, 60, 5, 32);
  const auto coeffs = full_scattering_channel(x, bank);
  CHECK(coeff_norm(coeffs) > 0.0);
  CHECK(std::isfinite(coeff_norm(coeffs)));
  (void)kTwoPi;
}
