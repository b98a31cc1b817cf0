#include "scatterfusion/safe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

void require_scale_features(const ScaleFeatures& f, const char* who) {
  if (f.H.empty()) throw ContractError(std::string(who) + ": needs at least one scale");
  for (const auto& h : f.H) {
    check_tensor(h);
    if (h.ndim() != 2)
      throw DimensionError(std::string(who) + ": scale maps must be [T x D], got " +
                           h.shape_str());
    if (!h.same_shape(f.H.front()))
      throw DimensionError(std::string(who) + ": scale maps disagree, " + h.shape_str() +
                           " vs " + f.H.front().shape_str());
    if (!h.all_finite()) throw NumericError(std::string(who) + ": non-finite scale map");
  }
}

void require_row(const Tensor& v, long d, const char* who, const char* name) {
  if (v.ndim() != 2 || v.rows() != 1 || v.cols() != d)
    throw DimensionError(std::string(who) + ": " + name + " must be [1 x " +
                         std::to_string(d) + "], got " + v.shape_str());
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor context_vectors(const ScaleFeatures& f) {
  require_scale_features(f, "context_vectors");
  const long js = f.scales();
  const long t_len = f.H.front().rows();
  const long d = f.H.front().cols();
  Tensor h = Tensor::zeros({js, d});
  for (long j = 0; j < js; ++j) {
    const Tensor& m = f.H[static_cast<std::size_t>(j)];
    for (long t = 0; t < t_len; ++t)
      for (long c = 0; c < d; ++c) h.at(j, c) += m.at(t, c);
    for (long c = 0; c < d; ++c) h.at(j, c) /= static_cast<double>(t_len);
  }
  return h;
}

Tensor scale_attention(const Tensor& h, const Tensor& w_alpha) {
  if (h.ndim() != 2) throw DimensionError("scale_attention: h must be [J_s x D]");
  const long js = h.rows();
  const long d = h.cols();
  require_row(w_alpha, d, "scale_attention", "w_alpha");
  std::vector<double> logits(static_cast<std::size_t>(js), 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (long j = 0; j < js; ++j) {
    double z = 0.0;
    for (long c = 0; c < d; ++c) z += w_alpha.at(0, c) * h.at(j, c);
    if (!std::isfinite(z)) throw NumericError("scale_attention: non-finite logit");
    logits[static_cast<std::size_t>(j)] = z;
    top = std::max(top, z);
  }
  double denom = 0.0;
  for (double& z : logits) {
    z = std::exp(z - top);
    denom += z;
  }
  Tensor alpha = Tensor::zeros({js, 1});
  for (long j = 0; j < js; ++j)
    alpha.data[static_cast<std::size_t>(j)] = logits[static_cast<std::size_t>(j)] / denom;
  return alpha;
}

Tensor horizon_gate(long t_p, const SafeParams& params, long t_p_max) {
  if (t_p_max < 1) throw ContractError("horizon_gate: t_p_max must be >= 1");
  if (t_p < 1 || t_p > t_p_max)
    throw ContractError("horizon_gate: t_p = " + std::to_string(t_p) + " outside [1, " +
                        std::to_string(t_p_max) + "]");
  const long d = params.w_gamma.ndim() == 2 ? params.w_gamma.cols() : 0;
  require_row(params.w_gamma, d, "horizon_gate", "w_gamma");
  require_row(params.b_gamma, d, "horizon_gate", "b_gamma");
  const double frac = static_cast<double>(t_p) / static_cast<double>(t_p_max);
  Tensor gamma = Tensor::zeros({1, d});
  for (long c = 0; c < d; ++c)
    gamma.at(0, c) = stable_sigmoid(params.w_gamma.at(0, c) * frac + params.b_gamma.at(0, c));
  return gamma;
}

Tensor enhance(const ScaleFeatures& f, const Tensor& alpha, const Tensor& gamma) {
  require_scale_features(f, "enhance");
  const long js = f.scales();
  const long t_len = f.H.front().rows();
  const long d = f.H.front().cols();
  if (alpha.ndim() != 2 || alpha.rows() != js || alpha.cols() != 1)
    throw DimensionError("enhance: alpha must be [" + std::to_string(js) + " x 1], got " +
                         alpha.shape_str());
  require_row(gamma, d, "enhance", "gamma");
  Tensor out = Tensor::zeros({t_len, d});
  for (long j = 0; j < js; ++j) {
    const double a = alpha.data[static_cast<std::size_t>(j)];
    const Tensor& m = f.H[static_cast<std::size_t>(j)];
    for (long t = 0; t < t_len; ++t)
      for (long c = 0; c < d; ++c) out.at(t, c) += a * m.at(t, c);
  }
  for (long t = 0; t < t_len; ++t)
    for (long c = 0; c < d; ++c) out.at(t, c) *= gamma.at(0, c);
  return out;
}

Var context_vectors_tape(Tape& tape, const std::vector<Var>& H) {
  if (H.empty()) throw ContractError("context_vectors_tape: needs at least one scale");
  std::vector<Var> rows;
  rows.reserve(H.size());
  for (Var v : H) rows.push_back(tape.mean_rows(v));
  return tape.concat_rows(rows);
}

Var scale_attention_tape(Tape& tape, Var h, Var w_alpha) {
  const Var logits = tape.matmul(h, tape.transpose(w_alpha));
  return tape.transpose(tape.softmax_rows(tape.transpose(logits)));
}

Var horizon_gate_tape(Tape& tape, Var w_gamma, Var b_gamma, long t_p, long t_p_max) {
  if (t_p_max < 1) throw ContractError("horizon_gate_tape: t_p_max must be >= 1");
  if (t_p < 1 || t_p > t_p_max)
    throw ContractError("horizon_gate_tape: t_p = " + std::to_string(t_p) + " outside [1, " +
                        std::to_string(t_p_max) + "]");
  const double frac = static_cast<double>(t_p) / static_cast<double>(t_p_max);
  return tape.sigmoid(tape.add(tape.scale(w_gamma, frac), b_gamma));
}

Var enhance_tape(Tape& tape, const std::vector<Var>& H, Var alpha, Var gamma) {
  if (H.empty()) throw ContractError("enhance_tape: needs at least one scale");
  return tape.mul_rowvec(tape.weighted_sum(H, alpha), gamma);
}

}  // namespace scatterfusion
