#include "scatterfusion/conv.hpp"

#include <algorithm>
#include <cmath>

#include "scatterfusion/errors.hpp"

namespace scatterfusion {

long reflect_index(long i, long T) {
  if (T == 1) return 0;
  while (i < 0 || i >= T) {
    if (i < 0) i = -i;
    if (i >= T) i = 2 * T - 2 - i;
  }
  return i;
}

void fft_inplace(std::vector<std::complex<double>>& a, bool invert) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * 3.14159265358979323846 / static_cast<double>(len) * (invert ? 1 : -1);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (invert) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

static std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> fft_full_convolution(const std::vector<double>& a,
                                         const std::vector<double>& b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  // Pack both real sequences into one complex transform.
  std::vector<std::complex<double>> c(n, {0.0, 0.0});
  for (std::size_t i = 0; i < a.size(); ++i) c[i].real(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) c[i].imag(b[i]);
  fft_inplace(c, false);
  std::vector<std::complex<double>> prod(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::complex<double> ck = c[k];
    const std::complex<double> cnk = std::conj(c[(n - k) & (n - 1)]);
    const std::complex<double> ak = 0.5 * (ck + cnk);
    const std::complex<double> bk = std::complex<double>(0.0, -0.5) * (ck - cnk);
    prod[k] = ak * bk;
  }
  fft_inplace(prod, true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = prod[i].real();
  return out;
}

std::vector<double> direct_full_convolution(const std::vector<double>& a,
                                            const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += ai * b[j];
  }
  return out;
}

namespace {

bool use_fft(std::size_t T, std::size_t L, ConvPath path) {
  if (path == ConvPath::Direct) return false;
  if (path == ConvPath::Fft) return true;
  return static_cast<long>(T) * static_cast<long>(L) > kConvCrossover;
}

// Extended signal buffer covering every index the "same" convolution reads:
// px[u] = x_ext(u + center - L + 1), u in [0, T+L-1).
std::vector<double> padded_signal(const std::vector<double>& x, long L, long center,
                                  bool reflect) {
  const long T = static_cast<long>(x.size());
  const long P = T + L - 1;
  const long lo = center - L + 1;
  std::vector<double> px(static_cast<std::size_t>(P), 0.0);
  for (long u = 0; u < P; ++u) {
    const long i = u + lo;
    if (i >= 0 && i < T) {
      px[static_cast<std::size_t>(u)] = x[static_cast<std::size_t>(i)];
    } else if (reflect) {
      px[static_cast<std::size_t>(u)] = x[static_cast<std::size_t>(reflect_index(i, T))];
    }
  }
  return px;
}

std::vector<double> conv_same_impl(const std::vector<double>& x, const std::vector<double>& h,
                                   long center, bool reflect, ConvPath path) {
  const long T = static_cast<long>(x.size());
  const long L = static_cast<long>(h.size());
  if (T < 1 || L < 1) throw ContractError("convolution requires non-empty signal and filter");
  if (reflect && L > 2 * T)
    throw SupportError("filter length " + std::to_string(L) + " exceeds twice the signal length " +
                       std::to_string(T));
  if (!use_fft(x.size(), h.size(), path)) {
    std::vector<double> y(static_cast<std::size_t>(T), 0.0);
    for (long t = 0; t < T; ++t) {
      double acc = 0.0;
      for (long m = 0; m < L; ++m) {
        const long i = t - m + center;
        if (i >= 0 && i < T) {
          acc += h[static_cast<std::size_t>(m)] * x[static_cast<std::size_t>(i)];
        } else if (reflect) {
          acc += h[static_cast<std::size_t>(m)] * x[static_cast<std::size_t>(reflect_index(i, T))];
        }
      }
      y[static_cast<std::size_t>(t)] = acc;
    }
    return y;
  }
  const std::vector<double> px = padded_signal(x, L, center, reflect);
  const std::vector<double> full = fft_full_convolution(px, h);
  std::vector<double> y(static_cast<std::size_t>(T));
  for (long t = 0; t < T; ++t) y[static_cast<std::size_t>(t)] = full[static_cast<std::size_t>(t + L - 1)];
  return y;
}

// grad_x: scatter each padded-position gradient back to its source sample.
std::vector<double> conv_grad_x_impl(const std::vector<double>& gy, const std::vector<double>& h,
                                     long center, long T, bool reflect, ConvPath path) {
  const long L = static_cast<long>(h.size());
  const long lo = center - L + 1;
  std::vector<double> gx(static_cast<std::size_t>(T), 0.0);
  if (!use_fft(static_cast<std::size_t>(T), h.size(), path)) {
    for (long t = 0; t < static_cast<long>(gy.size()); ++t) {
      const double g = gy[static_cast<std::size_t>(t)];
      for (long m = 0; m < L; ++m) {
        const long i = t - m + center;
        if (i >= 0 && i < T) {
          gx[static_cast<std::size_t>(i)] += g * h[static_cast<std::size_t>(m)];
        } else if (reflect) {
          gx[static_cast<std::size_t>(reflect_index(i, T))] += g * h[static_cast<std::size_t>(m)];
        }
      }
    }
    return gx;
  }
  std::vector<double> hr(h.rbegin(), h.rend());
  const std::vector<double> gpx = fft_full_convolution(gy, hr);  // length T + L - 1
  const long P = T + L - 1;
  for (long u = 0; u < P; ++u) {
    const long i = u + lo;
    if (i >= 0 && i < T) {
      gx[static_cast<std::size_t>(i)] += gpx[static_cast<std::size_t>(u)];
    } else if (reflect) {
      gx[static_cast<std::size_t>(reflect_index(i, T))] += gpx[static_cast<std::size_t>(u)];
    }
  }
  return gx;
}

std::vector<double> conv_grad_h_impl(const std::vector<double>& gy, const std::vector<double>& x,
                                     long center, long L, bool reflect, ConvPath path) {
  const long T = static_cast<long>(x.size());
  std::vector<double> gh(static_cast<std::size_t>(L), 0.0);
  if (!use_fft(x.size(), static_cast<std::size_t>(L), path)) {
    for (long t = 0; t < static_cast<long>(gy.size()); ++t) {
      const double g = gy[static_cast<std::size_t>(t)];
      for (long m = 0; m < L; ++m) {
        const long i = t - m + center;
        if (i >= 0 && i < T) {
          gh[static_cast<std::size_t>(m)] += g * x[static_cast<std::size_t>(i)];
        } else if (reflect) {
          gh[static_cast<std::size_t>(m)] += g * x[static_cast<std::size_t>(reflect_index(i, T))];
        }
      }
    }
    return gh;
  }
  // gh[m] = sum_t gy[t] * px[t - m + L - 1] = (gy (*) reverse(px))[T - 1 + m].
  std::vector<double> px = padded_signal(x, L, center, reflect);
  std::reverse(px.begin(), px.end());
  const std::vector<double> corr = fft_full_convolution(gy, px);
  for (long m = 0; m < L; ++m)
    gh[static_cast<std::size_t>(m)] = corr[static_cast<std::size_t>(T - 1 + m)];
  return gh;
}

}  // namespace

std::vector<double> conv_same_reflect(const std::vector<double>& x, const std::vector<double>& h,
                                      long center, ConvPath path) {
  return conv_same_impl(x, h, center, true, path);
}

std::vector<double> conv_same_zero(const std::vector<double>& x, const std::vector<double>& h,
                                   long center, ConvPath path) {
  return conv_same_impl(x, h, center, false, path);
}

std::vector<double> conv_same_reflect_grad_x(const std::vector<double>& gy,
                                             const std::vector<double>& h, long center, long T,
                                             ConvPath path) {
  return conv_grad_x_impl(gy, h, center, T, true, path);
}

std::vector<double> conv_same_reflect_grad_h(const std::vector<double>& gy,
                                             const std::vector<double>& x, long center, long L,
                                             ConvPath path) {
  return conv_grad_h_impl(gy, x, center, L, true, path);
}

std::vector<double> conv_same_zero_grad_x(const std::vector<double>& gy,
                                          const std::vector<double>& h, long center, long T,
                                          ConvPath path) {
  return conv_grad_x_impl(gy, h, center, T, false, path);
}

std::vector<double> conv_same_zero_grad_h(const std::vector<double>& gy,
                                          const std::vector<double>& x, long center, long L,
                                          ConvPath path) {
  return conv_grad_h_impl(gy, x, center, L, false, path);
}

}  // namespace scatterfusion
