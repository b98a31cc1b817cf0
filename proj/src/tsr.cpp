#include "scatterfusion/tsr.hpp"

#include <algorithm>
#include <cstddef>
#include <string>

#include "scatterfusion/conv.hpp"
#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

void require_period(long period, long T, const char* who) {
  if (period < 1 || 2 * period > T)
    throw ContractError(std::string(who) + ": period " + std::to_string(period) +
                        " outside [1, T/2] for T = " + std::to_string(T));
}

void require_weights(const LossWeights& w, const char* who) {
  if (w.lambda_t < 0.0 || w.lambda_s < 0.0 || w.lambda_r < 0.0 || w.beta < 0.0)
    throw ContractError(std::string(who) + ": loss weights must be nonnegative");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(what) + ": shape mismatch, " + a.shape_str() +
                         " vs " + b.shape_str());
}

double mse_plain(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

}  // namespace

std::pair<std::vector<double>, long> trend_kernel(long p) {
  if (p < 1) throw ContractError("trend_kernel: window must be positive");
  const double inv = 1.0 / static_cast<double>(p);
  if (p % 2 == 1) return {std::vector<double>(static_cast<std::size_t>(p), inv), (p - 1) / 2};
  std::vector<double> k(static_cast<std::size_t>(p + 1), inv);
  k.front() = 0.5 * inv;
  k.back() = 0.5 * inv;
  return {k, p / 2};
}

TsrComponents decompose(const Tensor& x, long period) {
  const long T = x.rows();
  const long C = x.cols();
  require_period(period, T, "decompose");

  const auto [kernel, center] = trend_kernel(period);
  TsrComponents out;
  out.trend = Tensor::zeros({T, C});
  out.seasonal = Tensor::zeros({T, C});
  out.residual = Tensor::zeros({T, C});
  out.period = period;

  const std::size_t P = static_cast<std::size_t>(period);
  std::vector<double> col(static_cast<std::size_t>(T));
  std::vector<double> prof(P), counts(P);
  for (long c = 0; c < C; ++c) {
    for (long t = 0; t < T; ++t) col[static_cast<std::size_t>(t)] = x.at(t, c);
    const std::vector<double> trend = conv_same_reflect(col, kernel, center);

    std::fill(prof.begin(), prof.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (long t = 0; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t % period);
      prof[k] += col[static_cast<std::size_t>(t)] - trend[static_cast<std::size_t>(t)];
      counts[k] += 1.0;
    }
    double prof_mean = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      prof[k] /= counts[k];
      prof_mean += prof[k];
    }
    prof_mean /= static_cast<double>(period);

    for (long t = 0; t < T; ++t) {
      const std::size_t i = static_cast<std::size_t>(t);
      const double tr = trend[i];
      const double se = prof[static_cast<std::size_t>(t % period)] - prof_mean;
      out.trend.at(t, c) = tr;
      out.seasonal.at(t, c) = se;
      out.residual.at(t, c) = (col[i] - tr) - se;
    }
  }
  return out;
}

double tsr_loss(const TsrComponents& target, const TsrComponents& prediction,
                const LossWeights& w) {
  require_weights(w, "tsr_loss");
  require_same_shape(prediction.trend, target.trend, "tsr_loss trend");
  require_same_shape(prediction.seasonal, target.seasonal, "tsr_loss seasonal");
  require_same_shape(prediction.residual, target.residual, "tsr_loss residual");
  return w.lambda_t * mse_plain(prediction.trend, target.trend) +
         w.lambda_s * mse_plain(prediction.seasonal, target.seasonal) +
         w.lambda_r * mse_plain(prediction.residual, target.residual);
}

double final_loss(const Tensor& x, const Tensor& x_hat, const LossWeights& w,
                  long period) {
  require_weights(w, "final_loss");
  require_same_shape(x_hat, x, "final_loss");
  const TsrComponents tx = decompose(x, period);
  const TsrComponents th = decompose(x_hat, period);
  return mse_plain(x_hat, x) + w.beta * tsr_loss(tx, th, w);
}

long detect_period(const Tensor& x, long t_s) {
  const long N = x.rows();
  const long C = x.cols();
  const long hi = std::max<long>(4, t_s / 2);
  const long nd = N - 1;
  const long max_lag = nd / 2;
  if (max_lag < 2) return 4;

  std::vector<double> score(static_cast<std::size_t>(max_lag) + 1, 0.0);
  std::vector<double> d(static_cast<std::size_t>(nd));
  long usable = 0;
  for (long c = 0; c < C; ++c) {
    double mean = 0.0;
    for (long t = 0; t < nd; ++t) {
      d[static_cast<std::size_t>(t)] = x.at(t + 1, c) - x.at(t, c);
      mean += d[static_cast<std::size_t>(t)];
    }
    mean /= static_cast<double>(nd);
    double var = 0.0;
    for (long t = 0; t < nd; ++t) {
      d[static_cast<std::size_t>(t)] -= mean;
      var += d[static_cast<std::size_t>(t)] * d[static_cast<std::size_t>(t)];
    }
    if (var < 1e-24) continue;
    ++usable;
    for (long lag = 2; lag <= max_lag; ++lag) {
      double acc = 0.0;
      for (long t = 0; t + lag < nd; ++t)
        acc += d[static_cast<std::size_t>(t)] * d[static_cast<std::size_t>(t + lag)];
      score[static_cast<std::size_t>(lag)] += acc / var;
    }
  }
  if (usable == 0) return 4;

  // The dominant lag is the highest local maximum, not the global argmax: a
  // long period makes the autocorrelation decay slowly, so plain argmax
  // would always land on the smallest lag scanned.
  long best = 0;
  for (long lag = 3; lag + 1 <= max_lag; ++lag) {
    const double s = score[static_cast<std::size_t>(lag)];
    if (s > score[static_cast<std::size_t>(lag - 1)] &&
        s >= score[static_cast<std::size_t>(lag + 1)] &&
        (best == 0 || s > score[static_cast<std::size_t>(best)]))
      best = lag;
  }
  if (best == 0 || score[static_cast<std::size_t>(best)] <= 0.0) return 4;
  return std::clamp<long>(best, 4, hi);
}

TsrVars decompose_tape(Tape& tape, Var x, long period) {
  const long T = tape.value(x).rows();
  const long C = tape.value(x).cols();
  require_period(period, T, "decompose");

  const auto [kernel, center] = trend_kernel(period);
  Tensor kt = Tensor::zeros({static_cast<long>(kernel.size()), 1});
  kt.data = kernel;
  const Var h = tape.constant(std::move(kt));

  std::vector<Var> trend_cols, seasonal_cols, residual_cols;
  trend_cols.reserve(static_cast<std::size_t>(C));
  seasonal_cols.reserve(static_cast<std::size_t>(C));
  residual_cols.reserve(static_cast<std::size_t>(C));
  for (long c = 0; c < C; ++c) {
    const Var col = C == 1 ? x : tape.slice_cols(x, c, c + 1);
    const Var trend = tape.conv1d_same_reflect(col, h, center);
    const Var detr = tape.sub(col, trend);
    const Var prof = tape.phase_means(detr, period);
    const Var centered = tape.add_rowvec(prof, tape.neg(tape.mean_rows(prof)));
    const Var seasonal = tape.phase_broadcast(centered, T);
    trend_cols.push_back(trend);
    seasonal_cols.push_back(seasonal);
    residual_cols.push_back(tape.sub(detr, seasonal));
  }
  if (C == 1) return {trend_cols[0], seasonal_cols[0], residual_cols[0]};
  return {tape.concat_cols(trend_cols), tape.concat_cols(seasonal_cols),
          tape.concat_cols(residual_cols)};
}

Var tsr_loss_tape(Tape& tape, const TsrVars& target, const TsrVars& prediction,
                  const LossWeights& w) {
  require_weights(w, "tsr_loss");
  const Var lt = tape.scale(tape.mse(prediction.trend, target.trend), w.lambda_t);
  const Var ls = tape.scale(tape.mse(prediction.seasonal, target.seasonal), w.lambda_s);
  const Var lr = tape.scale(tape.mse(prediction.residual, target.residual), w.lambda_r);
  return tape.add(tape.add(lt, ls), lr);
}

Var final_loss_tape(Tape& tape, Var x, Var x_hat, const LossWeights& w,
                    long period) {
  require_weights(w, "final_loss");
  require_same_shape(tape.value(x_hat), tape.value(x), "final_loss");
  const TsrVars tx = decompose_tape(tape, x, period);
  const TsrVars th = decompose_tape(tape, x_hat, period);
  return tape.add(tape.mse(x_hat, x), tape.scale(tsr_loss_tape(tape, tx, th, w), w.beta));
}

}  // namespace scatterfusion
