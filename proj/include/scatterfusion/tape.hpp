#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "scatterfusion/conv.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Handle into a Tape. Only meaningful together with the tape that issued it.
struct Var {
  long id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Each operation appends a node holding its value and a
// closure that scatters the node's gradient into its parents. backward()
// zero-fills all gradients, seeds the root with 1 and sweeps the tape in
// reverse. The tape owns all storage; Vars are indices.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value) { return leaf(std::move(value)); }
  Var scalar(double v) { return leaf(Tensor::scalar(v)); }

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var neg(Var a) { return scale(a, -1.0); }
  Var add_n(const std::vector<Var>& xs);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var log(Var a);

  // Broadcast a [1 x D] row vector across every row of a [T x D] matrix.
  Var add_rowvec(Var m, Var v);
  Var mul_rowvec(Var m, Var v);

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var softmax_rows(Var a);

  // Structure.
  Var reshape(Var a, std::vector<std::int64_t> shape);
  Var slice_rows(Var a, long r0, long r1);
  Var slice_cols(Var a, long c0, long c1);
  Var concat_cols(const std::vector<Var>& xs);
  Var concat_rows(const std::vector<Var>& xs);
  Var subsample_rows(Var a, long stride);

  // Reductions.
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var mean_rows(Var a);  // [T x D] -> [1 x D]
  Var mse(Var pred, Var target);

  // sum_k weights[k] * xs[k]; weights is a [K x 1] or [1 x K] vector.
  Var weighted_sum(const std::vector<Var>& xs, Var weights);

  // Signal ops on [T x 1] columns.
  Var conv1d_same_reflect(Var x, Var h, long center, ConvPath path = ConvPath::Auto);
  Var conv1d_same_zero(Var x, Var h, long center, ConvPath path = ConvPath::Auto);
  Var modulus(Var re, Var im);

  // Row pooling/unpooling for multi-resolution attention. pool_mean_rows
  // averages consecutive groups of `stride` rows (last group may be short);
  // upsample_linear_rows linearly interpolates pooled rows back to t_out rows
  // with each pooled value anchored at the centre of its source window.
  Var pool_mean_rows(Var a, long stride);
  Var upsample_linear_rows(Var a, long stride, long t_out);

  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

  // Seasonal helpers on [T x 1] columns: per-phase means for period p and the
  // inverse broadcast of a [p x 1] profile onto t_out rows.
  Var phase_means(Var x, long p);
  Var phase_broadcast(Var profile, long t_out);

  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Tensor&)> backward;
  };

  Var push(Tensor value, std::function<void(Tape&, const Tensor&)> backward);
  Tensor& grad_mut(Var v);
  const Tensor& val(Var v) const;
  void check(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace scatterfusion
