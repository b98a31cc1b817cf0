#pragma once

#include <utility>
#include <vector>

#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Dyadic complex wavelet bank for signals of length T: analytic Morlet ψ_j at
// scales j = 1..J, a Gaussian low-pass φ_J, and one learnable kernel g per
// scale (δ-initialized, length K_g odd). ψ filters are stored as [L x 1]
// column pairs; centers index the filter tap aligned with the output sample.
struct FilterBank {
  long J = 0;
  long T = 0;
  long K_g = 0;
  std::vector<ComplexTensor> psi;
  std::vector<long> psi_center;
  Tensor phi;
  long phi_center = 0;
  std::vector<Tensor> g;
};

// Morlet center frequency (3π/4)·2^{-j} and time width 3/ω_j; only the dyadic
// grid Q = 1 is supported.
ComplexTensor build_morlet(long j, long Q, long length);
Tensor build_lowpass(long J, long length);

long default_psi_length(long j, long T);
long default_phi_length(long J, long T);

FilterBank build_filterbank(long J, long T, long K_g);

// ψ_{j,θ}: convolve both parts of psi with g (zero padding, same length) and
// subtract each part's mean so the result keeps zero total mass.
ComplexTensor learnable_filter(const ComplexTensor& psi, const Tensor& g);
std::pair<Var, Var> learnable_filter_tape(Tape& tape, const ComplexTensor& psi, Var g);

// Length-preserving reflect-padded convolution of a real signal.
Tensor convolve(const Tensor& x, const Tensor& h, long center);
ComplexTensor convolve(const Tensor& x, const ComplexTensor& h, long center);

// Frequency of the magnitude-spectrum peak over ω in [0, π], evaluated on a
// dense grid by direct Fourier summation.
double spectral_peak(const ComplexTensor& f);

}  // namespace scatterfusion
