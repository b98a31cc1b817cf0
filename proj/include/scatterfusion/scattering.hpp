#pragma once

#include <utility>
#include <vector>

#include "scatterfusion/filterbank.hpp"
#include "scatterfusion/rng.hpp"
#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Zeroth/first/second order scattering output for one channel. All tensors
// are [T' x 1] columns; T' is T after optional subsampling by 2^{J-1}.
// s2 paths are ordered j1 ascending, then j2 ascending, j2 > j1.
struct ScatteringCoefficients {
  Tensor s0;
  std::vector<Tensor> s1;
  std::vector<Tensor> s2;
  std::vector<std::pair<long, long>> path_index;
  long t_out = 0;
};

struct ScatterOptions {
  bool subsample = true;
  ConvPath path = ConvPath::Auto;
};

std::vector<std::pair<long, long>> scattering_paths(long J);

// Plain (gradient-free) per-channel transforms. The bank's current g kernels
// are applied, so a trained bank measures the trained filters.
Tensor scatter0(const Tensor& x, const FilterBank& bank, const ScatterOptions& opt = {});
std::pair<std::vector<ComplexTensor>, std::vector<Tensor>> scatter1(const Tensor& x,
                                                                    const FilterBank& bank,
                                                                    const ScatterOptions& opt = {});
std::vector<Tensor> scatter2(const std::vector<ComplexTensor>& W1, const FilterBank& bank,
                             const ScatterOptions& opt = {});
ScatteringCoefficients full_scattering_channel(const Tensor& x, const FilterBank& bank,
                                               const ScatterOptions& opt = {});
// x is [T x C]; one coefficient set per channel, channels independent.
std::vector<ScatteringCoefficients> full_scattering(const Tensor& x, const FilterBank& bank,
                                                    const ScatterOptions& opt = {},
                                                    long threads = 1);

// Invariance measurements (always computed without subsampling).
double translation_distance(const Tensor& x, long c, const FilterBank& bank);

// Seeded probe for the invariance suite: integer-cycle sinusoids confined to
// [cycles_lo, cycles_hi], cosine-tapered to zero over `taper` samples at both
// ends so reflect padding sees a vanishing boundary. A positive margin keeps
// that many samples exactly zero at each end, which pushes the packet away
// from the low-pass filter's boundary region.
Tensor bandlimited_probe(Rng& rng, long t, long cycles_lo, long cycles_hi,
                         long components, long taper, long margin = 0);

// Same probe with explicit integer cycle counts; the rng draws only phases
// and amplitudes. Spacing the cycles keeps every envelope beat fast enough
// for the low-pass average to keep improving scale over scale.
Tensor bandlimited_probe(Rng& rng, long t, const std::vector<long>& cycles, long taper,
                         long margin = 0);

// Sinusoidal warp field whose first-difference slope peaks at eps. More warp
// cycles shrink the displacement amplitude eps/omega, keeping the
// perturbation in the linear-response regime at larger eps.
Tensor sinusoidal_warp(long t, double eps, double phase, long cycles = 1);

struct DeformationField {
  Tensor tau;
  double max_slope = 0.0;
};

// Computes max |tau(t+1) - tau(t)| and rejects fields with slope >= 1.
DeformationField make_deformation(Tensor tau);
// x(t - tau(t)) by circular linear interpolation, so a constant field
// reproduces the same shifted copy translation_distance uses.
Tensor apply_deformation(const Tensor& x, const DeformationField& field);
double deformation_distance(const Tensor& x, const DeformationField& field,
                            const FilterBank& bank);

// Tape-backed scattering for training. Filters are materialized once per tape
// (psi convolved with the learnable kernels when g_vars is non-empty) and can
// be reused across channels.
struct TapeFilters {
  std::vector<std::pair<Var, Var>> psi_theta;
  std::vector<long> psi_center;
  Var phi;
  long phi_center = 0;
};

TapeFilters build_tape_filters(Tape& tape, const FilterBank& bank,
                               const std::vector<Var>& g_vars);

struct ScatterVars {
  Var s0;
  std::vector<Var> s1;
  std::vector<Var> s2;
  std::vector<std::pair<long, long>> path_index;
  long t_out = 0;
};

ScatterVars scattering_tape(Tape& tape, Var x, const FilterBank& bank, const TapeFilters& filters,
                            bool subsample, ConvPath path = ConvPath::Auto);

}  // namespace scatterfusion
