#include "scatterfusion/scattering.hpp"

#include <cmath>
#include <string>

#include "scatterfusion/conv.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/util.hpp"

namespace scatterfusion {

namespace {

void require_column(const Tensor& x, const char* who) {
  if (x.ndim() != 2 || x.cols() != 1)
    throw DimensionError(std::string(who) + ": expected a [T x 1] signal, got " + x.shape_str());
}

long subsample_stride(const FilterBank& bank) { return 1L << (bank.J - 1); }

Tensor subsample_column(const Tensor& x, long stride) {
  const long T = x.rows();
  const long K = (T - 1) / stride + 1;
  Tensor out = Tensor::zeros({K, 1});
  for (long k = 0; k < K; ++k)
    out.data[static_cast<std::size_t>(k)] = x.data[static_cast<std::size_t>(k * stride)];
  return out;
}

Tensor modulus_plain(const ComplexTensor& z) {
  Tensor out = Tensor::zeros(z.real.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::hypot(z.real.data[i], z.imag.data[i]);
  return out;
}

Tensor conv_column(const Tensor& x, const Tensor& h, long center, ConvPath path) {
  Tensor out = Tensor::zeros(x.shape);
  out.data = conv_same_reflect(x.data, h.data, center, path);
  return out;
}

std::vector<ComplexTensor> effective_filters(const FilterBank& bank) {
  std::vector<ComplexTensor> out;
  out.reserve(bank.psi.size());
  for (std::size_t j = 0; j < bank.psi.size(); ++j)
    out.push_back(learnable_filter(bank.psi[j], bank.g[j]));
  return out;
}

double l2_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data) s += v * v;
  return std::sqrt(s);
}

// Flattened L2 distance between two coefficient sets of identical layout.
double coeff_distance(const ScatteringCoefficients& a, const ScatteringCoefficients& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.s0.data.size(); ++i) {
    const double d = a.s0.data[i] - b.s0.data[i];
    s += d * d;
  }
  for (std::size_t j = 0; j < a.s1.size(); ++j)
    for (std::size_t i = 0; i < a.s1[j].data.size(); ++i) {
      const double d = a.s1[j].data[i] - b.s1[j].data[i];
      s += d * d;
    }
  for (std::size_t p = 0; p < a.s2.size(); ++p)
    for (std::size_t i = 0; i < a.s2[p].data.size(); ++i) {
      const double d = a.s2[p].data[i] - b.s2[p].data[i];
      s += d * d;
    }
  return std::sqrt(s);
}

}  // namespace

std::vector<std::pair<long, long>> scattering_paths(long J) {
  std::vector<std::pair<long, long>> paths;
  for (long j1 = 1; j1 <= J; ++j1)
    for (long j2 = j1 + 1; j2 <= J; ++j2) paths.emplace_back(j1, j2);
  return paths;
}

Tensor scatter0(const Tensor& x, const FilterBank& bank, const ScatterOptions& opt) {
  require_column(x, "scatter0");
  if (x.rows() != bank.T)
    throw SupportError("scatter0: bank built for length " + std::to_string(bank.T) +
                       " applied to length " + std::to_string(x.rows()));
  Tensor s0 = conv_column(x, bank.phi, bank.phi_center, opt.path);
  if (opt.subsample) s0 = subsample_column(s0, subsample_stride(bank));
  return s0;
}

std::pair<std::vector<ComplexTensor>, std::vector<Tensor>> scatter1(const Tensor& x,
                                                                    const FilterBank& bank,
                                                                    const ScatterOptions& opt) {
  require_column(x, "scatter1");
  if (x.rows() != bank.T)
    throw SupportError("scatter1: bank built for length " + std::to_string(bank.T) +
                       " applied to length " + std::to_string(x.rows()));
  const auto psi = effective_filters(bank);
  std::vector<ComplexTensor> w1;
  std::vector<Tensor> s1;
  for (long j = 1; j <= bank.J; ++j) {
    const std::size_t idx = static_cast<std::size_t>(j - 1);
    ComplexTensor w(conv_column(x, psi[idx].real, bank.psi_center[idx], opt.path),
                    conv_column(x, psi[idx].imag, bank.psi_center[idx], opt.path));
    Tensor env = modulus_plain(w);
    Tensor s = conv_column(env, bank.phi, bank.phi_center, opt.path);
    if (opt.subsample) s = subsample_column(s, subsample_stride(bank));
    w1.push_back(std::move(w));
    s1.push_back(std::move(s));
  }
  return {std::move(w1), std::move(s1)};
}

std::vector<Tensor> scatter2(const std::vector<ComplexTensor>& W1, const FilterBank& bank,
                             const ScatterOptions& opt) {
  if (static_cast<long>(W1.size()) != bank.J)
    throw ContractError("scatter2: expected " + std::to_string(bank.J) + " first-order bands, got " +
                        std::to_string(W1.size()));
  const auto psi = effective_filters(bank);
  std::vector<Tensor> s2;
  for (const auto& [j1, j2] : scattering_paths(bank.J)) {
    const Tensor env1 = modulus_plain(W1[static_cast<std::size_t>(j1 - 1)]);
    const std::size_t idx2 = static_cast<std::size_t>(j2 - 1);
    ComplexTensor w2(conv_column(env1, psi[idx2].real, bank.psi_center[idx2], opt.path),
                     conv_column(env1, psi[idx2].imag, bank.psi_center[idx2], opt.path));
    Tensor env2 = modulus_plain(w2);
    Tensor s = conv_column(env2, bank.phi, bank.phi_center, opt.path);
    if (opt.subsample) s = subsample_column(s, subsample_stride(bank));
    s2.push_back(std::move(s));
  }
  return s2;
}

ScatteringCoefficients full_scattering_channel(const Tensor& x, const FilterBank& bank,
                                               const ScatterOptions& opt) {
  ScatteringCoefficients out;
  out.s0 = scatter0(x, bank, opt);
  auto [w1, s1] = scatter1(x, bank, opt);
  out.s1 = std::move(s1);
  out.s2 = scatter2(w1, bank, opt);
  out.path_index = scattering_paths(bank.J);
  out.t_out = out.s0.rows();
  return out;
}

std::vector<ScatteringCoefficients> full_scattering(const Tensor& x, const FilterBank& bank,
                                                    const ScatterOptions& opt, long threads) {
  if (x.ndim() != 2) throw DimensionError("full_scattering: expected [T x C], got " + x.shape_str());
  const long T = x.rows(), C = x.cols();
  if (C < 1) throw DimensionError("full_scattering: need at least one channel");
  std::vector<ScatteringCoefficients> out(static_cast<std::size_t>(C));
  parallel_for(C, threads, [&](long c) {
    Tensor col = Tensor::zeros({T, 1});
    for (long t = 0; t < T; ++t) col.data[static_cast<std::size_t>(t)] = x.at(t, c);
    out[static_cast<std::size_t>(c)] = full_scattering_channel(col, bank, opt);
  });
  return out;
}

double translation_distance(const Tensor& x, long c, const FilterBank& bank) {
  require_column(x, "translation_distance");
  const long T = x.rows();
  if (c < 0 || c >= T / 4)
    throw ContractError("translation_distance: shift must satisfy 0 <= c < T/4");
  Tensor shifted = Tensor::zeros({T, 1});
  for (long t = 0; t < T; ++t) {
    long src = (t - c) % T;
    if (src < 0) src += T;
    shifted.data[static_cast<std::size_t>(t)] = x.data[static_cast<std::size_t>(src)];
  }
  ScatterOptions opt;
  opt.subsample = false;
  const auto a = full_scattering_channel(x, bank, opt);
  const auto b = full_scattering_channel(shifted, bank, opt);
  const double nx = l2_norm(x);
  if (nx == 0.0) return 0.0;
  return coeff_distance(a, b) / nx;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void require_probe_window(long t, long taper, long margin) {
  if (taper < 0 || margin < 0 || 2 * (taper + margin) > t)
    throw ContractError("bandlimited_probe: margin and taper must fit twice into the signal");
}

void add_tone(Tensor& x, long begin, long end, long cycles, double phase, double amp) {
  const double omega = kTwoPi * static_cast<double>(cycles) / static_cast<double>(x.rows());
  for (long i = begin; i < end; ++i)
    x.data[static_cast<std::size_t>(i)] += amp * std::sin(omega * static_cast<double>(i) + phase);
}

void taper_ends(Tensor& x, long begin, long end, long taper) {
  for (long i = 0; i < taper; ++i) {
    const double w = 0.5 * (1.0 - std::cos(kTwoPi * 0.5 * static_cast<double>(i) /
                                           static_cast<double>(taper)));
    x.data[static_cast<std::size_t>(begin + i)] *= w;
    x.data[static_cast<std::size_t>(end - 1 - i)] *= w;
  }
}

}  // namespace

Tensor bandlimited_probe(Rng& rng, long t, long cycles_lo, long cycles_hi,
                         long components, long taper, long margin) {
  if (t < 2 || components < 1 || cycles_lo < 1 || cycles_hi < cycles_lo)
    throw ContractError("bandlimited_probe: need t >= 2, components >= 1 and a valid cycle band");
  require_probe_window(t, taper, margin);
  Tensor x = Tensor::zeros({t, 1});
  for (long k = 0; k < components; ++k) {
    const long cycles = cycles_lo + rng.uniform_int(cycles_hi - cycles_lo + 1);
    const double phase = kTwoPi * rng.uniform();
    const double amp = 0.5 + rng.uniform();
    add_tone(x, margin, t - margin, cycles, phase, amp);
  }
  taper_ends(x, margin, t - margin, taper);
  return x;
}

Tensor bandlimited_probe(Rng& rng, long t, const std::vector<long>& cycles, long taper,
                         long margin) {
  if (t < 2 || cycles.empty())
    throw ContractError("bandlimited_probe: need t >= 2 and at least one cycle count");
  for (long c : cycles)
    if (c < 1) throw ContractError("bandlimited_probe: cycle counts must be positive");
  require_probe_window(t, taper, margin);
  Tensor x = Tensor::zeros({t, 1});
  for (long c : cycles) {
    const double phase = kTwoPi * rng.uniform();
    const double amp = 0.5 + rng.uniform();
    add_tone(x, margin, t - margin, c, phase, amp);
  }
  taper_ends(x, margin, t - margin, taper);
  return x;
}

Tensor sinusoidal_warp(long t, double eps, double phase, long cycles) {
  if (t < 2 || cycles < 1) throw ContractError("sinusoidal_warp: need t >= 2 and cycles >= 1");
  constexpr double two_pi = 6.283185307179586476925286766559;
  const double omega = two_pi * static_cast<double>(cycles) / static_cast<double>(t);
  const double amp = eps / omega;
  Tensor tau = Tensor::zeros({t, 1});
  for (long i = 0; i < t; ++i)
    tau.data[static_cast<std::size_t>(i)] = amp * std::sin(omega * static_cast<double>(i) + phase);
  return tau;
}

DeformationField make_deformation(Tensor tau) {
  require_column(tau, "make_deformation");
  DeformationField field;
  double max_slope = 0.0;
  for (long t = 0; t + 1 < tau.rows(); ++t) {
    const double d = std::fabs(tau.data[static_cast<std::size_t>(t + 1)] -
                               tau.data[static_cast<std::size_t>(t)]);
    max_slope = std::max(max_slope, d);
  }
  field.tau = std::move(tau);
  field.max_slope = max_slope;
  if (max_slope >= 1.0)
    throw ContractError("make_deformation: hypothesis violated, sup |tau'| = " +
                        std::to_string(max_slope) + " >= 1");
  return field;
}

Tensor apply_deformation(const Tensor& x, const DeformationField& field) {
  require_column(x, "apply_deformation");
  if (!x.same_shape(field.tau))
    throw DimensionError("apply_deformation: signal " + x.shape_str() + " vs field " +
                         field.tau.shape_str());
  const long T = x.rows();
  Tensor out = Tensor::zeros({T, 1});
  // Circular extension, matching the shifted-copy convention of
  // translation_distance so a constant field reproduces a pure shift.
  for (long t = 0; t < T; ++t) {
    const double pos = static_cast<double>(t) - field.tau.data[static_cast<std::size_t>(t)];
    double wrapped = std::fmod(pos, static_cast<double>(T));
    if (wrapped < 0.0) wrapped += static_cast<double>(T);
    long lo = static_cast<long>(std::floor(wrapped));
    if (lo >= T) lo = 0;
    const long hi = (lo + 1) % T;
    const double w = wrapped - static_cast<double>(lo);
    if (w == 0.0) {
      out.data[static_cast<std::size_t>(t)] = x.data[static_cast<std::size_t>(lo)];
    } else {
      out.data[static_cast<std::size_t>(t)] = (1.0 - w) * x.data[static_cast<std::size_t>(lo)] +
                                              w * x.data[static_cast<std::size_t>(hi)];
    }
  }
  return out;
}

double deformation_distance(const Tensor& x, const DeformationField& field,
                            const FilterBank& bank) {
  if (field.max_slope >= 1.0)
    throw ContractError("deformation_distance: hypothesis violated, sup |tau'| >= 1");
  const Tensor warped = apply_deformation(x, field);
  ScatterOptions opt;
  opt.subsample = false;
  const auto a = full_scattering_channel(x, bank, opt);
  const auto b = full_scattering_channel(warped, bank, opt);
  const double nx = l2_norm(x);
  if (nx == 0.0) return 0.0;
  return coeff_distance(a, b) / nx;
}

TapeFilters build_tape_filters(Tape& tape, const FilterBank& bank,
                               const std::vector<Var>& g_vars) {
  if (!g_vars.empty() && static_cast<long>(g_vars.size()) != bank.J)
    throw ContractError("build_tape_filters: expected one g kernel per scale");
  TapeFilters out;
  for (long j = 0; j < bank.J; ++j) {
    const std::size_t idx = static_cast<std::size_t>(j);
    if (g_vars.empty()) {
      out.psi_theta.emplace_back(tape.constant(bank.psi[idx].real),
                                 tape.constant(bank.psi[idx].imag));
    } else {
      out.psi_theta.push_back(learnable_filter_tape(tape, bank.psi[idx], g_vars[idx]));
    }
    out.psi_center.push_back(bank.psi_center[idx]);
  }
  out.phi = tape.constant(bank.phi);
  out.phi_center = bank.phi_center;
  return out;
}

ScatterVars scattering_tape(Tape& tape, Var x, const FilterBank& bank, const TapeFilters& filters,
                            bool subsample, ConvPath path) {
  const long T = tape.value(x).rows();
  if (T != bank.T)
    throw SupportError("scattering_tape: bank built for length " + std::to_string(bank.T) +
                       " applied to length " + std::to_string(T));
  const long stride = subsample_stride(bank);
  auto finish = [&](Var v) {
    Var s = tape.conv1d_same_reflect(v, filters.phi, filters.phi_center, path);
    return subsample ? tape.subsample_rows(s, stride) : s;
  };
  ScatterVars out;
  out.s0 = finish(x);
  std::vector<Var> env1;
  for (long j = 0; j < bank.J; ++j) {
    const std::size_t idx = static_cast<std::size_t>(j);
    Var re = tape.conv1d_same_reflect(x, filters.psi_theta[idx].first, filters.psi_center[idx], path);
    Var im = tape.conv1d_same_reflect(x, filters.psi_theta[idx].second, filters.psi_center[idx], path);
    Var env = tape.modulus(re, im);
    env1.push_back(env);
    out.s1.push_back(finish(env));
  }
  out.path_index = scattering_paths(bank.J);
  for (const auto& [j1, j2] : out.path_index) {
    const std::size_t i1 = static_cast<std::size_t>(j1 - 1);
    const std::size_t i2 = static_cast<std::size_t>(j2 - 1);
    Var re = tape.conv1d_same_reflect(env1[i1], filters.psi_theta[i2].first, filters.psi_center[i2], path);
    Var im = tape.conv1d_same_reflect(env1[i1], filters.psi_theta[i2].second, filters.psi_center[i2], path);
    out.s2.push_back(finish(tape.modulus(re, im)));
  }
  out.t_out = tape.value(out.s0).rows();
  return out;
}

}  // namespace scatterfusion
