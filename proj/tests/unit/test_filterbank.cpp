#include <cmath>

#include "doctest.h"
#include "scatterfusion/conv.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/filterbank.hpp"
#include "scatterfusion/gradcheck.hpp"
#include "scatterfusion/rng.hpp"

using namespace scatterfusion;

namespace {

double abs_sum_ratio(const Tensor& part) {
  double s = 0.0, a = 0.0;
  for (double v : part.data) {
    s += v;
    a += std::fabs(v);
  }
  return std::fabs(s) / a;
}

double l2(const ComplexTensor& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.real.data.size(); ++i)
    s += f.real.data[i] * f.real.data[i] + f.imag.data[i] * f.imag.data[i];
  return std::sqrt(s);
}

// Discrete standard deviation of a nonnegative unit-mass filter.
double filter_sigma(const Tensor& phi) {
  double mean = 0.0;
  for (long n = 0; n < phi.rows(); ++n) mean += static_cast<double>(n) * phi.data[static_cast<std::size_t>(n)];
  double var = 0.0;
  for (long n = 0; n < phi.rows(); ++n) {
    const double d = static_cast<double>(n) - mean;
    var += d * d * phi.data[static_cast<std::size_t>(n)];
  }
  return std::sqrt(var);
}

}  // namespace

TEST_CASE("morlet filters have zero mean and unit norm") {
  for (long j : {1L, 2L, 3L, 4L, 5L}) {
    const auto psi = build_morlet(j, 1, default_psi_length(j, 2048));
    CHECK(abs_sum_ratio(psi.real) < 1e-6);
    CHECK(abs_sum_ratio(psi.imag) < 1e-6);
    CHECK(l2(psi) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("morlet center frequencies halve per scale") {
  double prev = 0.0;
  for (long j : {1L, 2L, 3L, 4L, 5L}) {
    const auto psi = build_morlet(j, 1, default_psi_length(j, 2048));
    const double peak = spectral_peak(psi);
    if (j > 1) {
      const double ratio = peak / prev;
      CHECK(ratio > 0.45);
      CHECK(ratio < 0.55);
    }
    prev = peak;
  }
}

TEST_CASE("morlet preconditions") {
  CHECK_THROWS_AS(build_morlet(2, 1, 31), SupportError);
  CHECK_THROWS_AS(build_morlet(0, 1, 64), ContractError);
  CHECK_THROWS_AS(build_morlet(2, 2, 64), ContractError);
}

TEST_CASE("lowpass is a nonnegative unit-sum gaussian") {
  for (long J : {2L, 3L, 4L, 5L}) {
    const auto phi = build_lowpass(J, default_phi_length(J, 4096));
    double sum = 0.0;
    for (double v : phi.data) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(build_lowpass(4, 63), SupportError);
}

TEST_CASE("lowpass passes constants and doubles its width per scale") {
  const auto phi = build_lowpass(4, default_phi_length(4, 4096));
  Tensor c = Tensor::full({200, 1}, 3.7);
  const auto y = convolve(c, phi, (phi.rows() - 1) / 2);
  for (double v : y.data) CHECK(std::fabs(v - 3.7) < 1e-10);

  const double s3 = filter_sigma(build_lowpass(3, default_phi_length(3, 4096)));
  const double s4 = filter_sigma(build_lowpass(4, default_phi_length(4, 4096)));
  const double s5 = filter_sigma(build_lowpass(5, default_phi_length(5, 4096)));
  CHECK(s4 / s3 == doctest::Approx(2.0).epsilon(5e-3));
  CHECK(s5 / s4 == doctest::Approx(2.0).epsilon(5e-3));
}

TEST_CASE("learnable filter with a delta kernel is the identity") {
  const auto psi = build_morlet(2, 1, default_psi_length(2, 256));
  Tensor delta = Tensor::zeros({7, 1});
  delta.data[3] = 1.0;
  const auto out = learnable_filter(psi, delta);
  for (std::size_t i = 0; i < psi.real.data.size(); ++i) {
    CHECK(std::fabs(out.real.data[i] - psi.real.data[i]) < 1e-15);
    CHECK(std::fabs(out.imag.data[i] - psi.imag.data[i]) < 1e-15);
  }

  Tensor twodelta = Tensor::zeros({7, 1});
  twodelta.data[3] = 2.0;
  const auto out2 = learnable_filter(psi, twodelta);
  for (std::size_t i = 0; i < psi.real.data.size(); ++i)
    CHECK(std::fabs(out2.real.data[i] - 2.0 * psi.real.data[i]) < 1e-14);

  CHECK_THROWS_AS(learnable_filter(psi, Tensor::zeros({6, 1})), ContractError);
}

TEST_CASE("learnable filter keeps zero mass for arbitrary kernels") {
  Rng r(61);
  const auto psi = build_morlet(3, 1, default_psi_length(3, 512));
  Tensor g = Tensor::zeros({7, 1});
  for (double& v : g.data) v = r.normal();
  const auto out = learnable_filter(psi, g);
  CHECK(abs_sum_ratio(out.real) < 1e-12);
  CHECK(abs_sum_ratio(out.imag) < 1e-12);
}

TEST_CASE("gradient of learnable filter energy with respect to g") {
  Rng r(62);
  const auto psi = build_morlet(2, 1, default_psi_length(2, 128));
  Tensor g = Tensor::zeros({7, 1});
  for (double& v : g.data) v = r.normal();

  auto energy = [&psi](Tape& t, Var gv) {
    auto [re, im] = learnable_filter_tape(t, psi, gv);
    return t.add(t.sum_all(t.mul(re, re)), t.sum_all(t.mul(im, im)));
  };

  Tape t;
  Var gv = t.leaf(g);
  Var loss = energy(t, gv);
  t.backward(loss);
  std::vector<Tensor> grads = {t.grad(gv)};

  auto f = [&energy](const std::vector<Tensor>& ps) {
    Tape tt;
    Var v = tt.leaf(ps[0]);
    return tt.value(energy(tt, v)).data[0];
  };
  CHECK(finite_diff_check(f, {g}, grads, 1e-6).max_rel_error < 1e-6);
}

TEST_CASE("convolve identity and linearity") {
  Rng r(63);
  Tensor x = Tensor::zeros({64, 1});
  for (double& v : x.data) v = r.normal();
  Tensor delta = Tensor::zeros({9, 1});
  delta.data[4] = 1.0;
  const auto y = convolve(x, delta, 4);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-14));

  Tensor z = Tensor::zeros({64, 1});
  for (double& v : z.data) v = r.normal();
  const auto psi = build_morlet(2, 1, default_psi_length(2, 64));
  Tensor mix = Tensor::zeros({64, 1});
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0 * x.data[i] - 0.5 * z.data[i];
  const auto ym = convolve(mix, psi.real, 16);
  const auto yx = convolve(x, psi.real, 16);
  const auto yz = convolve(z, psi.real, 16);
  for (std::size_t i = 0; i < ym.data.size(); ++i)
    CHECK(std::fabs(ym.data[i] - 2.0 * yx.data[i] + 0.5 * yz.data[i]) < 1e-10);
}

TEST_CASE("wavelet convolution agrees across paths on random cases") {
  Rng r(64);
  for (int rep = 0; rep < 50; ++rep) {
    const long T = 40 + r.uniform_int(160);
    const long j = 1 + r.uniform_int(2);
    const auto psi = build_morlet(j, 1, default_psi_length(j, T));
    std::vector<double> x(static_cast<std::size_t>(T));
    for (double& v : x) v = r.normal();
    const long c = (psi.real.rows() - 1) / 2;
    const auto d = conv_same_reflect(x, psi.real.data, c, ConvPath::Direct);
    const auto f = conv_same_reflect(x, psi.real.data, c, ConvPath::Fft);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::fabs(d[i] - f[i]) < 1e-9);
  }
}

TEST_CASE("bank construction invariants") {
  const auto bank = build_filterbank(4, 256, 7);
  CHECK(bank.psi.size() == 4);
  CHECK(bank.g.size() == 4);
  for (const auto& g : bank.g) {
    CHECK(g.numel() == 7);
    CHECK(g.data[3] == 1.0);
  }
  for (const auto& psi : bank.psi) {
    CHECK(abs_sum_ratio(psi.real) < 1e-6);
    CHECK(abs_sum_ratio(psi.imag) < 1e-6);
  }
  double sum = 0.0;
  for (double v : bank.phi.data) sum += v;
  CHECK(std::fabs(sum - 1.0) <= 1e-12);

  CHECK_THROWS_AS(build_filterbank(4, 32, 7), SupportError);
  CHECK_THROWS_AS(build_filterbank(4, 256, 6), ContractError);
}
