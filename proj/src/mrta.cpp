#include "scatterfusion/mrta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scatterfusion/dense.hpp"
#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

void require_matrix(const Tensor& t, const char* who, const char* name) {
  check_tensor(t);
  if (t.ndim() != 2)
    throw DimensionError(std::string(who) + ": " + name + " must be 2-D, got " + t.shape_str());
}

void softmax_rows_inplace(Tensor& a) {
  const long n = a.rows(), m = a.cols();
  for (long i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (long j = 0; j < m; ++j) top = std::max(top, a.at(i, j));
    if (!std::isfinite(top)) throw NumericError("softmax: non-finite logits");
    double denom = 0.0;
    for (long j = 0; j < m; ++j) {
      a.at(i, j) = std::exp(a.at(i, j) - top);
      denom += a.at(i, j);
    }
    for (long j = 0; j < m; ++j) a.at(i, j) /= denom;
  }
}

}  // namespace

void validate_mrta_params(const MrtaParams& p, long d_model, long d_attn) {
  const std::size_t n = p.strides.size();
  if (n == 0) throw ContractError("mrta: needs at least one stride");
  for (std::size_t i = 0; i < n; ++i) {
    if (p.strides[i] < 1) throw ContractError("mrta: strides must be positive");
    if (i > 0 && p.strides[i] <= p.strides[i - 1])
      throw ContractError("mrta: strides must be strictly increasing");
  }
  if (p.wq.size() != n || p.wk.size() != n || p.wv.size() != n)
    throw DimensionError("mrta: one Q/K/V projection required per stride");
  for (std::size_t i = 0; i < n; ++i)
    for (const Tensor* w : {&p.wq[i], &p.wk[i], &p.wv[i]}) {
      require_matrix(*w, "mrta", "projection");
      if (w->rows() != d_model || w->cols() != d_attn)
        throw DimensionError("mrta: projection must be [" + std::to_string(d_model) + " x " +
                             std::to_string(d_attn) + "], got " + w->shape_str());
    }
  if (p.w_logits.ndim() != 2 || p.w_logits.rows() != static_cast<long>(n) ||
      p.w_logits.cols() != 1)
    throw DimensionError("mrta: w_logits must be [" + std::to_string(n) + " x 1], got " +
                         p.w_logits.shape_str());
  if (p.wo.ndim() != 2 || p.wo.rows() != d_attn || p.wo.cols() != d_model)
    throw DimensionError("mrta: wo must be [" + std::to_string(d_attn) + " x " +
                         std::to_string(d_model) + "], got " + p.wo.shape_str());
  for (const Tensor* t : {&p.ln_gain, &p.ln_bias})
    if (t->ndim() != 2 || t->rows() != 1 || t->cols() != d_model)
      throw DimensionError("mrta: layer norm parameters must be [1 x " +
                           std::to_string(d_model) + "]");
}

Tensor pool(const Tensor& h, long r) {
  require_matrix(h, "pool", "input");
  if (r < 1) throw ContractError("pool: stride must be >= 1, got " + std::to_string(r));
  if (r == 1) return h;
  const long t_in = h.rows(), d = h.cols();
  const long t_out = (t_in + r - 1) / r;
  Tensor out = Tensor::zeros({t_out, d});
  for (long i = 0; i < t_out; ++i) {
    const long start = i * r;
    const long end = std::min(start + r, t_in);
    for (long t = start; t < end; ++t)
      for (long c = 0; c < d; ++c) out.at(i, c) += h.at(t, c);
    for (long c = 0; c < d; ++c) out.at(i, c) /= static_cast<double>(end - start);
  }
  return out;
}

AttentionResult resolution_attention(const Tensor& h_r, const Tensor& wq, const Tensor& wk,
                                     const Tensor& wv) {
  require_matrix(h_r, "resolution_attention", "input");
  for (const Tensor* w : {&wq, &wk, &wv}) {
    require_matrix(*w, "resolution_attention", "projection");
    if (w->rows() != h_r.cols() || !w->same_shape(wq))
      throw DimensionError("resolution_attention: projection shape " + w->shape_str() +
                           " incompatible with input " + h_r.shape_str());
  }
  const long d = wq.cols();
  const Tensor q = dense::matmul(h_r, wq);
  const Tensor k = dense::matmul(h_r, wk);
  const Tensor v = dense::matmul(h_r, wv);
  Tensor logits = dense::matmul_nt(q, k);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& z : logits.data) z *= inv_sqrt_d;
  softmax_rows_inplace(logits);
  return {dense::matmul(logits, v), std::move(logits)};
}

Tensor upsample(const Tensor& c, long stride, long t_out) {
  require_matrix(c, "upsample", "input");
  if (stride < 1) throw ContractError("upsample: stride must be >= 1");
  const long k = c.rows();
  if (t_out < k)
    throw ContractError("upsample: target length " + std::to_string(t_out) +
                        " shorter than input " + std::to_string(k));
  if (stride == 1 && t_out == k) return c;
  const long d = c.cols();
  auto center = [stride](long i) {
    return static_cast<double>(i * stride) + static_cast<double>(stride - 1) / 2.0;
  };
  Tensor out = Tensor::zeros({t_out, d});
  for (long t = 0; t < t_out; ++t) {
    const double pos = static_cast<double>(t);
    long lo = 0;
    if (k > 1) {
      const double rel = (pos - center(0)) / static_cast<double>(stride);
      lo = static_cast<long>(std::floor(rel));
      lo = std::max(0L, std::min(lo, k - 2));
    }
    const long hi = std::min(lo + 1, k - 1);
    double w = 0.0;
    if (hi > lo) {
      w = (pos - center(lo)) / (center(hi) - center(lo));
      w = std::max(0.0, std::min(1.0, w));
    }
    for (long col = 0; col < d; ++col)
      out.at(t, col) = (1.0 - w) * c.at(lo, col) + w * c.at(hi, col);
  }
  return out;
}

Tensor combine(const std::vector<Tensor>& views, const Tensor& w_logits) {
  if (views.empty()) throw ContractError("combine: needs at least one view");
  const long n = static_cast<long>(views.size());
  if (w_logits.numel() != n)
    throw DimensionError("combine: " + std::to_string(n) + " views but " +
                         std::to_string(w_logits.numel()) + " logits");
  for (const auto& v : views) {
    require_matrix(v, "combine", "view");
    if (!v.same_shape(views.front()))
      throw DimensionError("combine: view shapes disagree, " + v.shape_str() + " vs " +
                           views.front().shape_str());
  }
  Tensor w = w_logits;
  w.shape = {1, n};
  softmax_rows_inplace(w);
  Tensor out = Tensor::zeros(views.front().shape);
  for (long i = 0; i < n; ++i) {
    const double wi = w.data[static_cast<std::size_t>(i)];
    const auto& v = views[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < out.data.size(); ++p) out.data[p] += wi * v.data[p];
  }
  return out;
}

MrtaLayerTrace mrta_layer(const Tensor& h, const MrtaParams& p) {
  require_matrix(h, "mrta_layer", "input");
  validate_mrta_params(p, h.cols(), p.wo.rows());
  const long t_len = h.rows();
  const long d_model = h.cols();
  MrtaLayerTrace trace;
  std::vector<Tensor> views;
  for (std::size_t i = 0; i < p.strides.size(); ++i) {
    const long r = p.strides[i];
    const Tensor h_r = pool(h, r);
    auto att = resolution_attention(h_r, p.wq[i], p.wk[i], p.wv[i]);
    views.push_back(r == 1 ? att.context : upsample(att.context, r, t_len));
    trace.attention.push_back(std::move(att.weights));
  }
  const Tensor h_mrta = combine(views, p.w_logits);
  Tensor w = p.w_logits;
  w.shape = {1, static_cast<long>(p.strides.size())};
  softmax_rows_inplace(w);
  trace.combine_weights = std::move(w);

  Tensor mixed = dense::matmul(h_mrta, p.wo);
  for (std::size_t i = 0; i < mixed.data.size(); ++i) mixed.data[i] += h.data[i];
  Tensor out = Tensor::zeros({t_len, d_model});
  const double eps = 1e-5;
  for (long t = 0; t < t_len; ++t) {
    double mu = 0.0;
    for (long j = 0; j < d_model; ++j) mu += mixed.at(t, j);
    mu /= static_cast<double>(d_model);
    double var = 0.0;
    for (long j = 0; j < d_model; ++j) var += (mixed.at(t, j) - mu) * (mixed.at(t, j) - mu);
    var /= static_cast<double>(d_model);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (long j = 0; j < d_model; ++j)
      out.at(t, j) = (mixed.at(t, j) - mu) * inv * p.ln_gain.at(0, j) + p.ln_bias.at(0, j);
  }
  trace.out = std::move(out);
  return trace;
}

MrtaLayerVars mrta_layer_tape(Tape& tape, Var h, const MrtaVars& p) {
  if (p.strides.empty()) throw ContractError("mrta_layer_tape: needs at least one stride");
  const long t_len = tape.value(h).rows();
  const long d_attn = tape.value(p.wo).rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_attn));
  MrtaLayerVars result;
  std::vector<Var> views;
  for (std::size_t i = 0; i < p.strides.size(); ++i) {
    const long r = p.strides[i];
    const Var h_r = r == 1 ? h : tape.pool_mean_rows(h, r);
    const Var q = tape.matmul(h_r, p.wq[i]);
    const Var k = tape.matmul(h_r, p.wk[i]);
    const Var v = tape.matmul(h_r, p.wv[i]);
    const Var a = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d));
    const Var c = tape.matmul(a, v);
    views.push_back(r == 1 ? c : tape.upsample_linear_rows(c, r, t_len));
    result.attention.push_back(a);
  }
  result.combine_weights = tape.softmax_rows(tape.transpose(p.w_logits));
  const Var h_mrta = tape.weighted_sum(views, result.combine_weights);
  const Var mixed = tape.add(h, tape.matmul(h_mrta, p.wo));
  result.out = tape.layer_norm_rows(mixed, p.ln_gain, p.ln_bias);
  return result;
}

}  // namespace scatterfusion
