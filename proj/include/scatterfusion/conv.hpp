#pragma once

#include <complex>
#include <vector>

namespace scatterfusion {

// Radix-2 in-place FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool invert);

// Full linear convolution of two real sequences, length a+b-1, via FFT.
std::vector<double> fft_full_convolution(const std::vector<double>& a,
                                         const std::vector<double>& b);

// Direct O(n*m) full convolution, the oracle for the FFT path.
std::vector<double> direct_full_convolution(const std::vector<double>& a,
                                            const std::vector<double>& b);

enum class ConvPath { Auto, Direct, Fft };

// Direct path below this many multiply-adds (T * L); FFT above.
inline constexpr long kConvCrossover = 32768;

// Length-preserving 1-D convolution. The filter h has `center` as its
// anchor sample: y(t) = sum_m h(m) * x_ext(t - m + center).
// Reflect variant extends x by mirroring about the edge samples; zero
// variant extends with zeros (used when the "signal" is itself a
// compactly supported filter).
std::vector<double> conv_same_reflect(const std::vector<double>& x,
                                      const std::vector<double>& h, long center,
                                      ConvPath path = ConvPath::Auto);
std::vector<double> conv_same_zero(const std::vector<double>& x,
                                   const std::vector<double>& h, long center,
                                   ConvPath path = ConvPath::Auto);

// Adjoints used by the tape. grad_x has length T, grad_h length L.
std::vector<double> conv_same_reflect_grad_x(const std::vector<double>& gy,
                                             const std::vector<double>& h, long center,
                                             long T, ConvPath path = ConvPath::Auto);
std::vector<double> conv_same_reflect_grad_h(const std::vector<double>& gy,
                                             const std::vector<double>& x, long center,
                                             long L, ConvPath path = ConvPath::Auto);
std::vector<double> conv_same_zero_grad_x(const std::vector<double>& gy,
                                          const std::vector<double>& h, long center,
                                          long T, ConvPath path = ConvPath::Auto);
std::vector<double> conv_same_zero_grad_h(const std::vector<double>& gy,
                                          const std::vector<double>& x, long center,
                                          long L, ConvPath path = ConvPath::Auto);

// Mirror an out-of-range index back into [0, T); edge samples not repeated.
long reflect_index(long i, long T);

}  // namespace scatterfusion
