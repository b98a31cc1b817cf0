#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scatterfusion/filterbank.hpp"
#include "scatterfusion/mrta.hpp"
#include "scatterfusion/safe.hpp"
#include "scatterfusion/scattering.hpp"
#include "scatterfusion/tape.hpp"
#include "scatterfusion/tensor.hpp"

namespace scatterfusion {

struct ModelConfig {
  long T_s = 96;
  long T_p = 24;
  long T_p_max = 720;
  long C = 1;
  long D = 64;  // model width
  long d = 32;  // attention width
  long J = 4;   // scattering scales
  std::vector<long> strides = {1, 2, 4};
  long num_mrta_layers = 2;
  long K_g = 7;
  bool use_hstm = true;
  bool use_safe = true;
  bool use_mrta = true;
  bool use_tsr_loss = true;
  std::uint64_t seed = 1;
};

void validate_config(const ModelConfig& cfg);

// Strides actually used by the attention stack: the MRTA ablation collapses
// the configured set to {1}.
std::vector<long> effective_strides(const ModelConfig& cfg);

// Scattering coefficients entering scale group j (1-based): s0, s1[j] and
// every s2 path with first scale j.
long group_width(long J, long j);

// Time length of the subsampled scattering grid the attention stack runs on.
long scatter_length(long T_s, long J);

struct Forecaster {
  ModelConfig cfg;
  FilterBank bank;                 // owns the learnable g kernels
  Tensor embed_w;                  // [C x D]
  Tensor embed_b;                  // [1 x D]
  Tensor pos_enc;                  // [T_s x D], fixed
  std::vector<Tensor> scale_proj;  // group j -> [group_width(J, j) x D]
  SafeParams safe;
  std::vector<MrtaParams> mrta;
  Tensor head_w;                   // [T'*D x T_p*C]
  Tensor head_b;                   // [1 x T_p*C]
  long t_prime = 0;
};

Forecaster make_forecaster(const ModelConfig& cfg);

struct NamedParam {
  std::string name;
  Tensor* value;
};

// Trainable tensors in a fixed order; ablated blocks contribute none.
std::vector<NamedParam> parameters(Forecaster& m);
std::vector<std::pair<std::string, Tensor>> parameter_snapshot(const Forecaster& m);
long parameter_count(const Forecaster& m);
void set_parameters(Forecaster& m, const std::vector<Tensor>& values);

// Per-window, per-channel z-score. Channels with vanishing spread keep
// sigma = 1 so constant windows normalize to zero instead of blowing up.
struct NormStats {
  Tensor mu;     // [1 x C]
  Tensor sigma;  // [1 x C]
};
NormStats window_stats(const Tensor& x);
Tensor normalize_window(const Tensor& x, const NormStats& s);
Tensor denormalize_window(const Tensor& y, const NormStats& s);

Tensor positional_encoding(long t_len, long d_model);

// Per-step linear projection C -> D plus the fixed positional encoding.
// Expects an already normalized window.
Tensor embed(const Forecaster& m, const Tensor& x_norm);

struct ForwardTrace {
  Tensor alpha;                                // [J x 1]
  std::vector<std::vector<Tensor>> attention;  // layer -> stride -> [T_r x T_r]
  std::vector<Tensor> combine;                 // layer -> [1 x |R|]
};

// Full pipeline on a raw [T_s x C] window; returns the de-normalized
// [T_p x C] forecast. Threads parallelize the per-channel scattering.
Tensor forward(const Forecaster& m, const Tensor& x, ForwardTrace* trace = nullptr,
               long threads = 1);

struct TapeForward {
  std::vector<Var> params;  // leaves, same order as parameters()
  Var y_norm;               // [T_p x C] prediction in normalized units
  NormStats stats;
};

// Training graph: the window enters as a constant, every trainable parameter
// becomes a leaf so gradients can be read back in registry order.
TapeForward forward_tape(Tape& tape, const Forecaster& m, const Tensor& x);

}  // namespace scatterfusion
