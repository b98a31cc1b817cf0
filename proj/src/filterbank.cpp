#include "scatterfusion/filterbank.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "scatterfusion/conv.hpp"
#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

constexpr double kPi = 3.14159265358979323846;

double morlet_omega(long j) { return 0.75 * kPi * std::pow(2.0, -static_cast<double>(j)); }
double morlet_sigma(long j) { return 3.0 / morlet_omega(j); }
double lowpass_sigma(long J) { return (8.0 / (3.0 * kPi)) * std::pow(2.0, static_cast<double>(J)); }

}  // namespace

long default_psi_length(long j, long T) {
  const long want = (1L << j) * 8 + 1;
  return std::min(want, 2 * T);
}

long default_phi_length(long J, long T) {
  const long want = (1L << J) * 8 + 1;
  return std::min(want, 2 * T);
}

ComplexTensor build_morlet(long j, long Q, long length) {
  if (j < 1) throw ContractError("build_morlet: scale exponent must be >= 1");
  if (Q != 1) throw ContractError("build_morlet: only Q = 1 is supported");
  if (length < (1L << j) * 8)
    throw SupportError("build_morlet: length " + std::to_string(length) + " below minimum " +
                       std::to_string((1L << j) * 8) + " for scale " + std::to_string(j));
  const double omega = morlet_omega(j);
  const double sigma = morlet_sigma(j);
  const long c = (length - 1) / 2;

  std::vector<std::complex<double>> carrier(static_cast<std::size_t>(length));
  std::vector<double> window(static_cast<std::size_t>(length));
  std::complex<double> carrier_mass(0.0, 0.0);
  double window_mass = 0.0;
  for (long n = 0; n < length; ++n) {
    const double t = static_cast<double>(n - c);
    window[static_cast<std::size_t>(n)] = std::exp(-t * t / (2.0 * sigma * sigma));
    carrier[static_cast<std::size_t>(n)] = std::polar(1.0, omega * t);
    carrier_mass += carrier[static_cast<std::size_t>(n)] * window[static_cast<std::size_t>(n)];
    window_mass += window[static_cast<std::size_t>(n)];
  }
  // κ makes the discretized, truncated wavelet sum to exactly zero.
  const std::complex<double> kappa = carrier_mass / window_mass;

  Tensor re = Tensor::zeros({length, 1});
  Tensor im = Tensor::zeros({length, 1});
  double norm2 = 0.0;
  for (long n = 0; n < length; ++n) {
    const std::complex<double> v =
        (carrier[static_cast<std::size_t>(n)] - kappa) * window[static_cast<std::size_t>(n)];
    re.data[static_cast<std::size_t>(n)] = v.real();
    im.data[static_cast<std::size_t>(n)] = v.imag();
    norm2 += std::norm(v);
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (long n = 0; n < length; ++n) {
    re.data[static_cast<std::size_t>(n)] *= inv;
    im.data[static_cast<std::size_t>(n)] *= inv;
  }
  return ComplexTensor(std::move(re), std::move(im));
}

Tensor build_lowpass(long J, long length) {
  if (J < 1) throw ContractError("build_lowpass: J must be >= 1");
  if (length < (1L << J) * 4)
    throw SupportError("build_lowpass: length " + std::to_string(length) + " below minimum " +
                       std::to_string((1L << J) * 4) + " for J = " + std::to_string(J));
  const double sigma = lowpass_sigma(J);
  const long c = (length - 1) / 2;
  Tensor phi = Tensor::zeros({length, 1});
  double mass = 0.0;
  for (long n = 0; n < length; ++n) {
    const double t = static_cast<double>(n - c);
    phi.data[static_cast<std::size_t>(n)] = std::exp(-t * t / (2.0 * sigma * sigma));
    mass += phi.data[static_cast<std::size_t>(n)];
  }
  for (double& v : phi.data) v /= mass;
  return phi;
}

FilterBank build_filterbank(long J, long T, long K_g) {
  if (J < 1) throw ContractError("build_filterbank: J must be >= 1");
  if (K_g < 1 || K_g % 2 == 0) throw ContractError("build_filterbank: K_g must be odd");
  if (T < (1L << J) * 4)
    throw SupportError("build_filterbank: signal length " + std::to_string(T) +
                       " too short for scale J = " + std::to_string(J) + " (need >= " +
                       std::to_string((1L << J) * 4) + ")");
  FilterBank bank;
  bank.J = J;
  bank.T = T;
  bank.K_g = K_g;
  for (long j = 1; j <= J; ++j) {
    const long L = default_psi_length(j, T);
    bank.psi.push_back(build_morlet(j, 1, L));
    bank.psi_center.push_back((L - 1) / 2);
    Tensor delta = Tensor::zeros({K_g, 1});
    delta.data[static_cast<std::size_t>((K_g - 1) / 2)] = 1.0;
    bank.g.push_back(std::move(delta));
  }
  const long Lp = default_phi_length(J, T);
  bank.phi = build_lowpass(J, Lp);
  bank.phi_center = (Lp - 1) / 2;
  return bank;
}

ComplexTensor learnable_filter(const ComplexTensor& psi, const Tensor& g) {
  const long K = g.numel();
  if (K % 2 == 0) throw ContractError("learnable_filter: kernel length must be odd");
  const long center = (K - 1) / 2;
  ComplexTensor out(Tensor::zeros(psi.real.shape), Tensor::zeros(psi.imag.shape));
  out.real.data = conv_same_zero(psi.real.data, g.data, center);
  out.imag.data = conv_same_zero(psi.imag.data, g.data, center);
  for (Tensor* part : {&out.real, &out.imag}) {
    double mean = 0.0;
    for (double v : part->data) mean += v;
    mean /= static_cast<double>(part->data.size());
    for (double& v : part->data) v -= mean;
  }
  return out;
}

std::pair<Var, Var> learnable_filter_tape(Tape& tape, const ComplexTensor& psi, Var g) {
  const long K = tape.value(g).numel();
  if (K % 2 == 0) throw ContractError("learnable_filter: kernel length must be odd");
  const long center = (K - 1) / 2;
  Var re = tape.conv1d_same_zero(tape.constant(psi.real), g, center);
  Var im = tape.conv1d_same_zero(tape.constant(psi.imag), g, center);
  auto demean = [&tape](Var x) {
    Var m = tape.mean_rows(x);
    return tape.add_rowvec(x, tape.neg(m));
  };
  return {demean(re), demean(im)};
}

Tensor convolve(const Tensor& x, const Tensor& h, long center) {
  if (x.ndim() != 2 || x.cols() != 1)
    throw DimensionError("convolve: expected a [T x 1] signal, got " + x.shape_str());
  Tensor out = Tensor::zeros(x.shape);
  out.data = conv_same_reflect(x.data, h.data, center);
  return out;
}

ComplexTensor convolve(const Tensor& x, const ComplexTensor& h, long center) {
  return ComplexTensor(convolve(x, h.real, center), convolve(x, h.imag, center));
}

double spectral_peak(const ComplexTensor& f) {
  const long L = f.numel();
  const long grid = 4096;
  double best_mag = -1.0;
  double best_omega = 0.0;
  for (long k = 0; k <= grid; ++k) {
    const double omega = kPi * static_cast<double>(k) / static_cast<double>(grid);
    std::complex<double> acc(0.0, 0.0);
    for (long n = 0; n < L; ++n) {
      const std::complex<double> v(f.real.data[static_cast<std::size_t>(n)],
                                   f.imag.data[static_cast<std::size_t>(n)]);
      acc += v * std::polar(1.0, -omega * static_cast<double>(n));
    }
    const double mag = std::abs(acc);
    if (mag > best_mag) {
      best_mag = mag;
      best_omega = omega;
    }
  }
  return best_omega;
}

}  // namespace scatterfusion
