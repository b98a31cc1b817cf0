#pragma once

#include <vector>

#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

// One attention layer over pooled views of the input at several strides.
// Views are attended independently, upsampled back to the input length and
// convexly combined; a d->D output projection, residual connection and layer
// norm wrap the block.
struct MrtaParams {
  std::vector<long> strides;       // positive, strictly increasing
  std::vector<Tensor> wq, wk, wv;  // per stride, [D x d]
  Tensor w_logits;                 // [|R| x 1]
  Tensor wo;                       // [d x D]
  Tensor ln_gain;                  // [1 x D]
  Tensor ln_bias;                  // [1 x D]
};

void validate_mrta_params(const MrtaParams& p, long d_model, long d_attn);

Tensor pool(const Tensor& h, long r);

struct AttentionResult {
  Tensor context;  // [T_r x d]
  Tensor weights;  // [T_r x T_r], rows sum to 1
};
AttentionResult resolution_attention(const Tensor& h_r, const Tensor& wq, const Tensor& wk,
                                     const Tensor& wv);

// Linear interpolation back to t_out rows; pooled row i sits at time center
// stride*i + (stride-1)/2 and values are clamped beyond the outermost centers.
Tensor upsample(const Tensor& c, long stride, long t_out);

Tensor combine(const std::vector<Tensor>& views, const Tensor& w_logits);

struct MrtaLayerTrace {
  Tensor out;                     // [T x D]
  std::vector<Tensor> attention;  // per stride [T_r x T_r]
  Tensor combine_weights;         // [1 x |R|]
};
MrtaLayerTrace mrta_layer(const Tensor& h, const MrtaParams& p);

struct MrtaVars {
  std::vector<long> strides;
  std::vector<Var> wq, wk, wv;
  Var w_logits, wo, ln_gain, ln_bias;
};

struct MrtaLayerVars {
  Var out;
  std::vector<Var> attention;
  Var combine_weights;
};
MrtaLayerVars mrta_layer_tape(Tape& tape, Var h, const MrtaVars& p);

}  // namespace scatterfusion
