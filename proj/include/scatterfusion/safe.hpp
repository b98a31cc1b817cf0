#pragma once

#include <vector>

#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// Per-scale feature maps H_j, all [T x D] with common T and D.
struct ScaleFeatures {
  std::vector<Tensor> H;
  long scales() const { return static_cast<long>(H.size()); }
};

struct SafeParams {
  Tensor w_alpha;  // [1 x D]
  Tensor w_gamma;  // [1 x D]
  Tensor b_gamma;  // [1 x D]
};

// Temporal mean of each scale map: row j is (1/T) sum_t H_j[t].
Tensor context_vectors(const ScaleFeatures& f);

// alpha_j = softmax over j of w_alpha . h_j, as a [J_s x 1] column.
Tensor scale_attention(const Tensor& h, const Tensor& w_alpha);

// Elementwise sigmoid of w_gamma * (t_p / t_p_max) + b_gamma, a [1 x D] row.
// t_p outside [1, t_p_max] is a contract violation.
Tensor horizon_gate(long t_p, const SafeParams& params, long t_p_max);

// (sum_j alpha_j H_j) with every row scaled elementwise by gamma.
Tensor enhance(const ScaleFeatures& f, const Tensor& alpha, const Tensor& gamma);

// Tape-backed equivalents used inside the model. Shapes match the plain
// versions; H entries are [T x D] vars on the same tape.
Var context_vectors_tape(Tape& tape, const std::vector<Var>& H);
Var scale_attention_tape(Tape& tape, Var h, Var w_alpha);
Var horizon_gate_tape(Tape& tape, Var w_gamma, Var b_gamma, long t_p, long t_p_max);
Var enhance_tape(Tape& tape, const std::vector<Var>& H, Var alpha, Var gamma);

}  // namespace scatterfusion
