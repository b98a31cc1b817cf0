#include "scatterfusion/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scatterfusion/dense.hpp"
#include "scatterfusion/errors.hpp"

namespace scatterfusion {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

void require_2d(const Tensor& a, const char* op) {
  if (a.ndim() != 2)
    throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " + a.shape_str());
}

void require_column(const Tensor& a, const char* op) {
  if (a.ndim() != 2 || a.cols() != 1)
    throw DimensionError(std::string(op) + ": expected a [T x 1] column, got " + a.shape_str());
}

long pooled_rows(long t, long stride) { return (t + stride - 1) / stride; }

// Time position a pooled row represents: centre of its stride window.
double pool_center(long k, long stride) {
  return static_cast<double>(k * stride) + 0.5 * static_cast<double>(stride - 1);
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> backward) {
  check_tensor(value);
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<long>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<long>(nodes_.size()))
    throw ContractError("variable id " + std::to_string(v.id) + " is not on this tape");
}

const Tensor& Tape::val(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor& Tape::grad_mut(Var v) {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].grad;
}

const Tensor& Tape::value(Var v) const { return val(v); }

const Tensor& Tape::grad(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].grad;
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::add(Var a, Var b) {
  require_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
      ga.data[i] += gy.data[i];
      gb.data[i] += gy.data[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
      ga.data[i] += gy.data[i];
      gb.data[i] -= gy.data[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& gy) {
    const Tensor& va = t.val(a);
    const Tensor& vb2 = t.val(b);
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
      ga.data[i] += gy.data[i] * vb2.data[i];
      gb.data[i] += gy.data[i] * va.data[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (double& x : out.data) x *= s;
  return push(std::move(out), [a, s](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += s * gy.data[i];
  });
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = val(a);
  for (double& x : out.data) x += s;
  return push(std::move(out), [a](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
  });
}

Var Tape::add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("add_n: empty operand list");
  Tensor out = val(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& v = val(xs[k]);
    require_same_shape(out, v, "add_n");
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += v.data[i];
  }
  std::vector<Var> parents = xs;
  return push(std::move(out), [parents](Tape& t, const Tensor& gy) {
    for (Var p : parents) {
      Tensor& gp = t.grad_mut(p);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gp.data[i] += gy.data[i];
    }
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  const long out_id = static_cast<long>(nodes_.size());
  return push(std::move(out), [a, out_id](Tape& t, const Tensor& gy) {
    const Tensor& y = t.val(Var{out_id});
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i)
      ga.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& x : out.data) x = x > 0.0 ? x : 0.0;
  return push(std::move(out), [a](Tape& t, const Tensor& gy) {
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i)
      if (va.data[i] > 0.0) ga.data[i] += gy.data[i];
  });
}

Var Tape::log(Var a) {
  const Tensor& va = val(a);
  for (double x : va.data)
    if (x <= 0.0) throw NumericError("log: input must be strictly positive");
  Tensor out = va;
  for (double& x : out.data) x = std::log(x);
  return push(std::move(out), [a](Tape& t, const Tensor& gy) {
    const Tensor& va2 = t.val(a);
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] / va2.data[i];
  });
}

Var Tape::add_rowvec(Var m, Var v) {
  require_2d(val(m), "add_rowvec");
  const Tensor& vm = val(m);
  const Tensor& vv = val(v);
  if (vv.ndim() != 2 || vv.rows() != 1 || vv.cols() != vm.cols())
    throw DimensionError("add_rowvec: expected [1 x " + std::to_string(vm.cols()) + "], got " +
                         vv.shape_str());
  Tensor out = vm;
  const long T = vm.rows(), D = vm.cols();
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < D; ++j) out.data[static_cast<std::size_t>(t * D + j)] += vv.data[static_cast<std::size_t>(j)];
  return push(std::move(out), [m, v, T, D](Tape& t, const Tensor& gy) {
    Tensor& gm = t.grad_mut(m);
    Tensor& gv = t.grad_mut(v);
    for (long r = 0; r < T; ++r)
      for (long j = 0; j < D; ++j) {
        const double g = gy.data[static_cast<std::size_t>(r * D + j)];
        gm.data[static_cast<std::size_t>(r * D + j)] += g;
        gv.data[static_cast<std::size_t>(j)] += g;
      }
  });
}

Var Tape::mul_rowvec(Var m, Var v) {
  require_2d(val(m), "mul_rowvec");
  const Tensor& vm = val(m);
  const Tensor& vv = val(v);
  if (vv.ndim() != 2 || vv.rows() != 1 || vv.cols() != vm.cols())
    throw DimensionError("mul_rowvec: expected [1 x " + std::to_string(vm.cols()) + "], got " +
                         vv.shape_str());
  Tensor out = vm;
  const long T = vm.rows(), D = vm.cols();
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < D; ++j) out.data[static_cast<std::size_t>(t * D + j)] *= vv.data[static_cast<std::size_t>(j)];
  return push(std::move(out), [m, v, T, D](Tape& t, const Tensor& gy) {
    const Tensor& vm2 = t.val(m);
    const Tensor& vv2 = t.val(v);
    Tensor& gm = t.grad_mut(m);
    Tensor& gv = t.grad_mut(v);
    for (long r = 0; r < T; ++r)
      for (long j = 0; j < D; ++j) {
        const double g = gy.data[static_cast<std::size_t>(r * D + j)];
        gm.data[static_cast<std::size_t>(r * D + j)] += g * vv2.data[static_cast<std::size_t>(j)];
        gv.data[static_cast<std::size_t>(j)] += g * vm2.data[static_cast<std::size_t>(r * D + j)];
      }
  });
}

Var Tape::matmul(Var a, Var b) {
  require_2d(val(a), "matmul");
  require_2d(val(b), "matmul");
  if (val(a).cols() != val(b).rows())
    throw DimensionError("matmul: inner dimensions disagree, " + val(a).shape_str() + " vs " +
                         val(b).shape_str());
  Tensor out = dense::matmul(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, const Tensor& gy) {
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    Tensor da = dense::matmul_nt(gy, vb);
    Tensor db = dense::matmul_tn(va, gy);
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < da.data.size(); ++i) ga.data[i] += da.data[i];
    for (std::size_t i = 0; i < db.data.size(); ++i) gb.data[i] += db.data[i];
  });
}

Var Tape::transpose(Var a) {
  require_2d(val(a), "transpose");
  const Tensor& va = val(a);
  const long R = va.rows(), C = va.cols();
  Tensor out = Tensor::zeros({C, R});
  for (long i = 0; i < R; ++i)
    for (long j = 0; j < C; ++j)
      out.data[static_cast<std::size_t>(j * R + i)] = va.data[static_cast<std::size_t>(i * C + j)];
  return push(std::move(out), [a, R, C](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long i = 0; i < R; ++i)
      for (long j = 0; j < C; ++j)
        ga.data[static_cast<std::size_t>(i * C + j)] += gy.data[static_cast<std::size_t>(j * R + i)];
  });
}

Var Tape::softmax_rows(Var a) {
  require_2d(val(a), "softmax_rows");
  const Tensor& va = val(a);
  if (!va.all_finite()) throw NumericError("softmax_rows: input contains non-finite values");
  const long T = va.rows(), D = va.cols();
  Tensor out = Tensor::zeros({T, D});
  for (long t = 0; t < T; ++t) {
    const double* row = va.data.data() + t * D;
    double mx = row[0];
    for (long j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    double* orow = out.data.data() + t * D;
    for (long j = 0; j < D; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    for (long j = 0; j < D; ++j) orow[j] /= s;
  }
  const long out_id = static_cast<long>(nodes_.size());
  return push(std::move(out), [a, out_id, T, D](Tape& t, const Tensor& gy) {
    const Tensor& y = t.val(Var{out_id});
    Tensor& ga = t.grad_mut(a);
    for (long r = 0; r < T; ++r) {
      const double* yrow = y.data.data() + r * D;
      const double* grow = gy.data.data() + r * D;
      double dot = 0.0;
      for (long j = 0; j < D; ++j) dot += grow[j] * yrow[j];
      for (long j = 0; j < D; ++j)
        ga.data[static_cast<std::size_t>(r * D + j)] += yrow[j] * (grow[j] - dot);
    }
  });
}

Var Tape::reshape(Var a, std::vector<std::int64_t> shape) {
  Tensor out;
  out.shape = std::move(shape);
  out.data = val(a).data;
  check_tensor(out);
  if (out.numel() != val(a).numel())
    throw DimensionError("reshape: cannot view " + val(a).shape_str() + " as " + out.shape_str());
  return push(std::move(out), [a](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
  });
}

Var Tape::slice_rows(Var a, long r0, long r1) {
  require_2d(val(a), "slice_rows");
  const Tensor& va = val(a);
  const long T = va.rows(), D = va.cols();
  if (r0 < 0 || r1 > T || r0 >= r1)
    throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") invalid for " + va.shape_str());
  Tensor out = Tensor::zeros({r1 - r0, D});
  std::copy(va.data.begin() + r0 * D, va.data.begin() + r1 * D, out.data.begin());
  return push(std::move(out), [a, r0, D](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < gy.data.size(); ++i)
      ga.data[static_cast<std::size_t>(r0 * D) + i] += gy.data[i];
  });
}

Var Tape::slice_cols(Var a, long c0, long c1) {
  require_2d(val(a), "slice_cols");
  const Tensor& va = val(a);
  const long T = va.rows(), D = va.cols();
  if (c0 < 0 || c1 > D || c0 >= c1)
    throw DimensionError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") invalid for " + va.shape_str());
  const long W = c1 - c0;
  Tensor out = Tensor::zeros({T, W});
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < W; ++j)
      out.data[static_cast<std::size_t>(t * W + j)] = va.data[static_cast<std::size_t>(t * D + c0 + j)];
  return push(std::move(out), [a, c0, T, D, W](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long r = 0; r < T; ++r)
      for (long j = 0; j < W; ++j)
        ga.data[static_cast<std::size_t>(r * D + c0 + j)] += gy.data[static_cast<std::size_t>(r * W + j)];
  });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("concat_cols: empty operand list");
  const long T = val(xs[0]).rows();
  long W = 0;
  for (Var v : xs) {
    require_2d(val(v), "concat_cols");
    if (val(v).rows() != T)
      throw DimensionError("concat_cols: row counts disagree, " + val(xs[0]).shape_str() + " vs " +
                           val(v).shape_str());
    W += val(v).cols();
  }
  Tensor out = Tensor::zeros({T, W});
  long off = 0;
  for (Var v : xs) {
    const Tensor& vv = val(v);
    const long w = vv.cols();
    for (long t = 0; t < T; ++t)
      for (long j = 0; j < w; ++j)
        out.data[static_cast<std::size_t>(t * W + off + j)] = vv.data[static_cast<std::size_t>(t * w + j)];
    off += w;
  }
  std::vector<Var> parents = xs;
  std::vector<long> widths;
  for (Var v : xs) widths.push_back(val(v).cols());
  return push(std::move(out), [parents, widths, T, W](Tape& t, const Tensor& gy) {
    long o = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      Tensor& gp = t.grad_mut(parents[k]);
      const long w = widths[k];
      for (long r = 0; r < T; ++r)
        for (long j = 0; j < w; ++j)
          gp.data[static_cast<std::size_t>(r * w + j)] += gy.data[static_cast<std::size_t>(r * W + o + j)];
      o += w;
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("concat_rows: empty operand list");
  const long D = val(xs[0]).cols();
  long T = 0;
  for (Var v : xs) {
    require_2d(val(v), "concat_rows");
    if (val(v).cols() != D)
      throw DimensionError("concat_rows: column counts disagree, " + val(xs[0]).shape_str() +
                           " vs " + val(v).shape_str());
    T += val(v).rows();
  }
  Tensor out = Tensor::zeros({T, D});
  long off = 0;
  for (Var v : xs) {
    const Tensor& vv = val(v);
    std::copy(vv.data.begin(), vv.data.end(), out.data.begin() + off * D);
    off += vv.rows();
  }
  std::vector<Var> parents = xs;
  std::vector<long> heights;
  for (Var v : xs) heights.push_back(val(v).rows());
  return push(std::move(out), [parents, heights, D](Tape& t, const Tensor& gy) {
    long o = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      Tensor& gp = t.grad_mut(parents[k]);
      const long h = heights[k];
      for (long i = 0; i < h * D; ++i)
        gp.data[static_cast<std::size_t>(i)] += gy.data[static_cast<std::size_t>(o * D + i)];
      o += h;
    }
  });
}

Var Tape::subsample_rows(Var a, long stride) {
  require_2d(val(a), "subsample_rows");
  if (stride < 1) throw ContractError("subsample_rows: stride must be positive");
  const Tensor& va = val(a);
  const long T = va.rows(), D = va.cols();
  const long K = (T - 1) / stride + 1;
  Tensor out = Tensor::zeros({K, D});
  for (long k = 0; k < K; ++k)
    for (long j = 0; j < D; ++j)
      out.data[static_cast<std::size_t>(k * D + j)] = va.data[static_cast<std::size_t>(k * stride * D + j)];
  return push(std::move(out), [a, stride, K, D](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long k = 0; k < K; ++k)
      for (long j = 0; j < D; ++j)
        ga.data[static_cast<std::size_t>(k * stride * D + j)] += gy.data[static_cast<std::size_t>(k * D + j)];
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& va = val(a);
  double s = 0.0;
  for (double x : va.data) s += x;
  return push(Tensor::scalar(s), [a](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (double& g : ga.data) g += gy.data[0];
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& va = val(a);
  const double n = static_cast<double>(va.numel());
  double s = 0.0;
  for (double x : va.data) s += x;
  return push(Tensor::scalar(s / n), [a, n](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (double& g : ga.data) g += gy.data[0] / n;
  });
}

Var Tape::mean_rows(Var a) {
  require_2d(val(a), "mean_rows");
  const Tensor& va = val(a);
  const long T = va.rows(), D = va.cols();
  Tensor out = Tensor::zeros({1, D});
  for (long t = 0; t < T; ++t)
    for (long j = 0; j < D; ++j) out.data[static_cast<std::size_t>(j)] += va.data[static_cast<std::size_t>(t * D + j)];
  for (double& x : out.data) x /= static_cast<double>(T);
  return push(std::move(out), [a, T, D](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long r = 0; r < T; ++r)
      for (long j = 0; j < D; ++j)
        ga.data[static_cast<std::size_t>(r * D + j)] += gy.data[static_cast<std::size_t>(j)] / static_cast<double>(T);
  });
}

Var Tape::mse(Var pred, Var target) {
  require_same_shape(val(pred), val(target), "mse");
  const Tensor& vp = val(pred);
  const Tensor& vt = val(target);
  const double n = static_cast<double>(vp.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < vp.data.size(); ++i) {
    const double d = vp.data[i] - vt.data[i];
    s += d * d;
  }
  return push(Tensor::scalar(s / n), [pred, target, n](Tape& t, const Tensor& gy) {
    const Tensor& vp2 = t.val(pred);
    const Tensor& vt2 = t.val(target);
    Tensor& gp = t.grad_mut(pred);
    Tensor& gt = t.grad_mut(target);
    const double c = 2.0 * gy.data[0] / n;
    for (std::size_t i = 0; i < vp2.data.size(); ++i) {
      const double d = c * (vp2.data[i] - vt2.data[i]);
      gp.data[i] += d;
      gt.data[i] -= d;
    }
  });
}

Var Tape::weighted_sum(const std::vector<Var>& xs, Var weights) {
  if (xs.empty()) throw ContractError("weighted_sum: empty operand list");
  const Tensor& vw = val(weights);
  if (vw.numel() != static_cast<std::int64_t>(xs.size()))
    throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " operands but " +
                         std::to_string(vw.numel()) + " weights");
  Tensor out = Tensor::zeros(val(xs[0]).shape);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = val(xs[k]);
    require_same_shape(out, v, "weighted_sum");
    const double w = vw.data[k];
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += w * v.data[i];
  }
  std::vector<Var> parents = xs;
  return push(std::move(out), [parents, weights](Tape& t, const Tensor& gy) {
    const Tensor& vw2 = t.val(weights);
    Tensor& gw = t.grad_mut(weights);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const Tensor& v = t.val(parents[k]);
      Tensor& gp = t.grad_mut(parents[k]);
      double acc = 0.0;
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        gp.data[i] += vw2.data[k] * gy.data[i];
        acc += gy.data[i] * v.data[i];
      }
      gw.data[k] += acc;
    }
  });
}

Var Tape::conv1d_same_reflect(Var x, Var h, long center, ConvPath path) {
  require_column(val(x), "conv1d_same_reflect");
  require_column(val(h), "conv1d_same_reflect");
  const long T = val(x).rows();
  const long L = val(h).rows();
  if (center < 0 || center >= L) throw ContractError("conv1d_same_reflect: center outside filter");
  Tensor out = Tensor::zeros({T, 1});
  out.data = conv_same_reflect(val(x).data, val(h).data, center, path);
  return push(std::move(out), [x, h, center, T, L, path](Tape& t, const Tensor& gy) {
    const std::vector<double> gx = conv_same_reflect_grad_x(gy.data, t.val(h).data, center, T, path);
    const std::vector<double> gh = conv_same_reflect_grad_h(gy.data, t.val(x).data, center, L, path);
    Tensor& gxt = t.grad_mut(x);
    Tensor& ght = t.grad_mut(h);
    for (long i = 0; i < T; ++i) gxt.data[static_cast<std::size_t>(i)] += gx[static_cast<std::size_t>(i)];
    for (long i = 0; i < L; ++i) ght.data[static_cast<std::size_t>(i)] += gh[static_cast<std::size_t>(i)];
  });
}

Var Tape::conv1d_same_zero(Var x, Var h, long center, ConvPath path) {
  require_column(val(x), "conv1d_same_zero");
  require_column(val(h), "conv1d_same_zero");
  const long T = val(x).rows();
  const long L = val(h).rows();
  if (center < 0 || center >= L) throw ContractError("conv1d_same_zero: center outside filter");
  Tensor out = Tensor::zeros({T, 1});
  out.data = conv_same_zero(val(x).data, val(h).data, center, path);
  return push(std::move(out), [x, h, center, T, L, path](Tape& t, const Tensor& gy) {
    const std::vector<double> gx = conv_same_zero_grad_x(gy.data, t.val(h).data, center, T, path);
    const std::vector<double> gh = conv_same_zero_grad_h(gy.data, t.val(x).data, center, L, path);
    Tensor& gxt = t.grad_mut(x);
    Tensor& ght = t.grad_mut(h);
    for (long i = 0; i < T; ++i) gxt.data[static_cast<std::size_t>(i)] += gx[static_cast<std::size_t>(i)];
    for (long i = 0; i < L; ++i) ght.data[static_cast<std::size_t>(i)] += gh[static_cast<std::size_t>(i)];
  });
}

Var Tape::modulus(Var re, Var im) {
  require_same_shape(val(re), val(im), "modulus");
  const Tensor& vr = val(re);
  const Tensor& vi = val(im);
  Tensor out = Tensor::zeros(vr.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::sqrt(vr.data[i] * vr.data[i] + vi.data[i] * vi.data[i]);
  const long out_id = static_cast<long>(nodes_.size());
  return push(std::move(out), [re, im, out_id](Tape& t, const Tensor& gy) {
    const Tensor& vr2 = t.val(re);
    const Tensor& vi2 = t.val(im);
    const Tensor& y = t.val(Var{out_id});
    Tensor& gr = t.grad_mut(re);
    Tensor& gi = t.grad_mut(im);
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
      if (y.data[i] == 0.0) continue;  // subgradient at the origin
      gr.data[i] += gy.data[i] * vr2.data[i] / y.data[i];
      gi.data[i] += gy.data[i] * vi2.data[i] / y.data[i];
    }
  });
}

Var Tape::pool_mean_rows(Var a, long stride) {
  require_2d(val(a), "pool_mean_rows");
  if (stride < 1) throw ContractError("pool_mean_rows: stride must be positive");
  const Tensor& va = val(a);
  const long T = va.rows(), D = va.cols();
  const long K = pooled_rows(T, stride);
  Tensor out = Tensor::zeros({K, D});
  for (long k = 0; k < K; ++k) {
    const long lo = k * stride;
    const long hi = std::min((k + 1) * stride, T);
    for (long r = lo; r < hi; ++r)
      for (long j = 0; j < D; ++j)
        out.data[static_cast<std::size_t>(k * D + j)] += va.data[static_cast<std::size_t>(r * D + j)];
    for (long j = 0; j < D; ++j) out.data[static_cast<std::size_t>(k * D + j)] /= static_cast<double>(hi - lo);
  }
  return push(std::move(out), [a, stride, T, D, K](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long k = 0; k < K; ++k) {
      const long lo = k * stride;
      const long hi = std::min((k + 1) * stride, T);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (long r = lo; r < hi; ++r)
        for (long j = 0; j < D; ++j)
          ga.data[static_cast<std::size_t>(r * D + j)] += inv * gy.data[static_cast<std::size_t>(k * D + j)];
    }
  });
}

Var Tape::upsample_linear_rows(Var a, long stride, long t_out) {
  require_2d(val(a), "upsample_linear_rows");
  if (stride < 1) throw ContractError("upsample_linear_rows: stride must be positive");
  if (t_out < 1) throw ContractError("upsample_linear_rows: output length must be positive");
  const Tensor& va = val(a);
  const long K = va.rows(), D = va.cols();
  if (t_out < K)
    throw ContractError("upsample_linear_rows: target length " + std::to_string(t_out) +
                        " shorter than input length " + std::to_string(K));
  // Interpolation weights: (row t) <- w0 * pooled[k0] + w1 * pooled[k0 + 1].
  // Pooled row i sits at time stride*i + (stride-1)/2; beyond the first or
  // last centre the nearest row is copied.
  std::vector<long> idx0(static_cast<std::size_t>(t_out));
  std::vector<double> w1(static_cast<std::size_t>(t_out));
  for (long t = 0; t < t_out; ++t) {
    const double pos = static_cast<double>(t);
    if (K == 1 || pos <= pool_center(0, stride)) {
      idx0[static_cast<std::size_t>(t)] = 0;
      w1[static_cast<std::size_t>(t)] = 0.0;
      continue;
    }
    if (pos >= pool_center(K - 1, stride)) {
      idx0[static_cast<std::size_t>(t)] = K - 2;
      w1[static_cast<std::size_t>(t)] = 1.0;
      continue;
    }
    long k = std::min<long>(t / stride, K - 2);
    while (k > 0 && pos < pool_center(k, stride)) --k;
    while (k < K - 2 && pos >= pool_center(k + 1, stride)) ++k;
    const double c0 = pool_center(k, stride);
    const double c1 = pool_center(k + 1, stride);
    idx0[static_cast<std::size_t>(t)] = k;
    w1[static_cast<std::size_t>(t)] = (pos - c0) / (c1 - c0);
  }
  Tensor out = Tensor::zeros({t_out, D});
  for (long t = 0; t < t_out; ++t) {
    const long k = idx0[static_cast<std::size_t>(t)];
    const double w = w1[static_cast<std::size_t>(t)];
    for (long j = 0; j < D; ++j) {
      double v = (1.0 - w) * va.data[static_cast<std::size_t>(k * D + j)];
      if (w != 0.0) v += w * va.data[static_cast<std::size_t>((k + 1) * D + j)];
      out.data[static_cast<std::size_t>(t * D + j)] = v;
    }
  }
  return push(std::move(out), [a, idx0, w1, t_out, D](Tape& t, const Tensor& gy) {
    Tensor& ga = t.grad_mut(a);
    for (long r = 0; r < t_out; ++r) {
      const long k = idx0[static_cast<std::size_t>(r)];
      const double w = w1[static_cast<std::size_t>(r)];
      for (long j = 0; j < D; ++j) {
        const double g = gy.data[static_cast<std::size_t>(r * D + j)];
        ga.data[static_cast<std::size_t>(k * D + j)] += (1.0 - w) * g;
        if (w != 0.0) ga.data[static_cast<std::size_t>((k + 1) * D + j)] += w * g;
      }
    }
  });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  require_2d(val(x), "layer_norm_rows");
  const Tensor& vx = val(x);
  const long T = vx.rows(), D = vx.cols();
  const Tensor& vg = val(gain);
  const Tensor& vb = val(bias);
  if (vg.ndim() != 2 || vg.rows() != 1 || vg.cols() != D)
    throw DimensionError("layer_norm_rows: gain must be [1 x " + std::to_string(D) + "], got " +
                         vg.shape_str());
  if (vb.ndim() != 2 || vb.rows() != 1 || vb.cols() != D)
    throw DimensionError("layer_norm_rows: bias must be [1 x " + std::to_string(D) + "], got " +
                         vb.shape_str());
  Tensor out = Tensor::zeros({T, D});
  for (long t = 0; t < T; ++t) {
    const double* row = vx.data.data() + t * D;
    double mu = 0.0;
    for (long j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (long j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(D);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (long j = 0; j < D; ++j)
      out.data[static_cast<std::size_t>(t * D + j)] = (row[j] - mu) * inv * vg.data[static_cast<std::size_t>(j)] +
                                                      vb.data[static_cast<std::size_t>(j)];
  }
  return push(std::move(out), [x, gain, bias, eps, T, D](Tape& t, const Tensor& gy) {
    const Tensor& vx2 = t.val(x);
    const Tensor& vg2 = t.val(gain);
    Tensor& gx = t.grad_mut(x);
    Tensor& gg = t.grad_mut(gain);
    Tensor& gb = t.grad_mut(bias);
    std::vector<double> xh(static_cast<std::size_t>(D));
    for (long r = 0; r < T; ++r) {
      const double* row = vx2.data.data() + r * D;
      const double* grow = gy.data.data() + r * D;
      double mu = 0.0;
      for (long j = 0; j < D; ++j) mu += row[j];
      mu /= static_cast<double>(D);
      double var = 0.0;
      for (long j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(D);
      const double inv = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (long j = 0; j < D; ++j) {
        xh[static_cast<std::size_t>(j)] = (row[j] - mu) * inv;
        const double gxh = grow[j] * vg2.data[static_cast<std::size_t>(j)];
        m1 += gxh;
        m2 += gxh * xh[static_cast<std::size_t>(j)];
        gg.data[static_cast<std::size_t>(j)] += grow[j] * xh[static_cast<std::size_t>(j)];
        gb.data[static_cast<std::size_t>(j)] += grow[j];
      }
      m1 /= static_cast<double>(D);
      m2 /= static_cast<double>(D);
      for (long j = 0; j < D; ++j) {
        const double gxh = grow[j] * vg2.data[static_cast<std::size_t>(j)];
        gx.data[static_cast<std::size_t>(r * D + j)] += (gxh - m1 - xh[static_cast<std::size_t>(j)] * m2) * inv;
      }
    }
  });
}

Var Tape::phase_means(Var x, long p) {
  require_column(val(x), "phase_means");
  const Tensor& vx = val(x);
  const long T = vx.rows();
  if (p < 1 || p > T)
    throw ContractError("phase_means: period " + std::to_string(p) + " invalid for length " +
                        std::to_string(T));
  Tensor out = Tensor::zeros({p, 1});
  std::vector<double> counts(static_cast<std::size_t>(p), 0.0);
  for (long t = 0; t < T; ++t) {
    out.data[static_cast<std::size_t>(t % p)] += vx.data[static_cast<std::size_t>(t)];
    counts[static_cast<std::size_t>(t % p)] += 1.0;
  }
  for (long k = 0; k < p; ++k) out.data[static_cast<std::size_t>(k)] /= counts[static_cast<std::size_t>(k)];
  return push(std::move(out), [x, p, T, counts](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_mut(x);
    for (long r = 0; r < T; ++r)
      gx.data[static_cast<std::size_t>(r)] += gy.data[static_cast<std::size_t>(r % p)] / counts[static_cast<std::size_t>(r % p)];
  });
}

Var Tape::phase_broadcast(Var profile, long t_out) {
  require_column(val(profile), "phase_broadcast");
  if (t_out < 1) throw ContractError("phase_broadcast: output length must be positive");
  const Tensor& vp = val(profile);
  const long p = vp.rows();
  Tensor out = Tensor::zeros({t_out, 1});
  for (long t = 0; t < t_out; ++t) out.data[static_cast<std::size_t>(t)] = vp.data[static_cast<std::size_t>(t % p)];
  return push(std::move(out), [profile, p, t_out](Tape& t, const Tensor& gy) {
    Tensor& gp = t.grad_mut(profile);
    for (long r = 0; r < t_out; ++r) gp.data[static_cast<std::size_t>(r % p)] += gy.data[static_cast<std::size_t>(r)];
  });
}

void Tape::backward(Var root) {
  check(root);
  if (val(root).numel() != 1)
    throw ContractError("backward: root must be a scalar, got " + val(root).shape_str());
  for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  nodes_[static_cast<std::size_t>(root.id)].grad.data[0] = 1.0;
  for (long i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward(*this, n.grad);
  }
}

}  // namespace scatterfusion
