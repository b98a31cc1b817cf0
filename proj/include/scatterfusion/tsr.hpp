#pragma once

#include <utility>
#include <vector>

#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Trend-seasonal-residual split of a [T x C] series and the decomposition
// weighted loss built on it. Every stage is linear in the input, so the
// split commutes with linear combinations and gradients pass through it
// unchanged.

struct TsrComponents {
  Tensor trend;
  Tensor seasonal;
  Tensor residual;
  long period = 0;
};

struct LossWeights {
  double lambda_t = 1.0;
  double lambda_s = 1.0;
  double lambda_r = 0.5;
  double beta = 0.5;
};

// Symmetric centered moving-average kernel for window p: odd p gives a box
// of length p, even p a length p+1 kernel with half-weight ends so the
// effective window stays p. Returns the kernel and its center index.
std::pair<std::vector<double>, long> trend_kernel(long p);

// trend = reflect-padded centered moving average of window `period`;
// seasonal = per-phase mean of (x - trend) with the profile mean removed,
// tiled over T; residual = what is left. Requires 1 <= period <= T/2.
TsrComponents decompose(const Tensor& x, long period);

// lambda_t * MSE(trend) + lambda_s * MSE(seasonal) + lambda_r * MSE(residual).
double tsr_loss(const TsrComponents& target, const TsrComponents& prediction,
                const LossWeights& w);

// MSE(x, x_hat) + beta * tsr_loss with both series decomposed at `period`.
double final_loss(const Tensor& x, const Tensor& x_hat, const LossWeights& w,
                  long period);

// Dominant autocorrelation lag of the series, averaged over channels and
// clamped to [4, max(4, t_s / 2)]. Works on first differences so a linear
// trend cannot mask the seasonal peak; degenerate input falls back to 4.
long detect_period(const Tensor& x, long t_s);

struct TsrVars {
  Var trend;
  Var seasonal;
  Var residual;
};

TsrVars decompose_tape(Tape& tape, Var x, long period);
Var tsr_loss_tape(Tape& tape, const TsrVars& target, const TsrVars& prediction,
                  const LossWeights& w);
Var final_loss_tape(Tape& tape, Var x, Var x_hat, const LossWeights& w,
                    long period);

}  // namespace scatterfusion
