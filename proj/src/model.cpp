#include "scatterfusion/model.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "scatterfusion/dense.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/rng.hpp"

namespace scatterfusion {

namespace {

constexpr double kSigmaFloor = 1e-8;

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

// Columns of scale group j for one channel: s0, s1[j], then every s2 path
// with first scale j, in path order.
Tensor group_matrix(const ScatteringCoefficients& sc, long J, long j) {
  const long T = sc.t_out;
  Tensor g = Tensor::zeros({T, group_width(J, j)});
  const long w = g.cols();
  long col = 0;
  auto put = [&](const Tensor& src) {
    for (long t = 0; t < T; ++t)
      g.data[static_cast<std::size_t>(t * w + col)] = src.data[static_cast<std::size_t>(t)];
    ++col;
  };
  put(sc.s0);
  put(sc.s1[static_cast<std::size_t>(j - 1)]);
  for (std::size_t k = 0; k < sc.path_index.size(); ++k)
    if (sc.path_index[k].first == j) put(sc.s2[k]);
  return g;
}

Var group_matrix_tape(Tape& tape, const ScatterVars& sv, long j) {
  std::vector<Var> cols = {sv.s0, sv.s1[static_cast<std::size_t>(j - 1)]};
  for (std::size_t k = 0; k < sv.path_index.size(); ++k)
    if (sv.path_index[k].first == j) cols.push_back(sv.s2[k]);
  return tape.concat_cols(cols);
}

void require_window(const ModelConfig& cfg, const Tensor& x, const char* who) {
  if (x.ndim() != 2 || x.rows() != cfg.T_s || x.cols() != cfg.C)
    throw DimensionError(std::string(who) + ": expected [" + std::to_string(cfg.T_s) +
                         " x " + std::to_string(cfg.C) + "] window, got " + x.shape_str());
}

}  // namespace

void validate_config(const ModelConfig& cfg) {
  if (cfg.J < 2) throw ConfigError("config: J must be at least 2");
  if (cfg.T_s < (1L << cfg.J) * 4)
    throw ConfigError("config: T_s = " + std::to_string(cfg.T_s) +
                      " too short for J = " + std::to_string(cfg.J) +
                      " (need T_s >= 2^J * 4)");
  if (cfg.T_p < 1) throw ConfigError("config: T_p must be positive");
  if (cfg.T_p > cfg.T_p_max)
    throw ConfigError("config: T_p = " + std::to_string(cfg.T_p) + " exceeds T_p_max = " +
                      std::to_string(cfg.T_p_max));
  if (cfg.C < 1) throw ConfigError("config: C must be positive");
  if (cfg.D < 1) throw ConfigError("config: D must be positive");
  if (cfg.d < 1) throw ConfigError("config: d must be positive");
  if (cfg.K_g < 1 || cfg.K_g % 2 == 0) throw ConfigError("config: K_g must be odd and positive");
  if (cfg.num_mrta_layers < 1) throw ConfigError("config: need at least one MRTA layer");
  if (cfg.strides.empty()) throw ConfigError("config: stride set must not be empty");
  long prev = 0;
  for (long r : cfg.strides) {
    if (r <= prev)
      throw ConfigError("config: strides must be positive and strictly increasing");
    prev = r;
  }
}

std::vector<long> effective_strides(const ModelConfig& cfg) {
  if (!cfg.use_mrta) return {1};
  return cfg.strides;
}

long group_width(long J, long j) { return 2 + (J - j); }

long scatter_length(long T_s, long J) {
  const long stride = 1L << (J - 1);
  return (T_s + stride - 1) / stride;
}

Forecaster make_forecaster(const ModelConfig& cfg) {
  validate_config(cfg);
  Forecaster m;
  m.cfg = cfg;
  m.bank = build_filterbank(cfg.J, cfg.T_s, cfg.K_g);
  m.t_prime = scatter_length(cfg.T_s, cfg.J);
  m.pos_enc = positional_encoding(cfg.T_s, cfg.D);

  Rng rng(cfg.seed);
  m.embed_w = rng.normal_tensor({cfg.C, cfg.D}, 1.0 / std::sqrt(static_cast<double>(cfg.C)));
  m.embed_b = Tensor::zeros({1, cfg.D});
  for (long j = 1; j <= cfg.J; ++j) {
    const long w = group_width(cfg.J, j);
    m.scale_proj.push_back(rng.normal_tensor({w, cfg.D}, 1.0 / std::sqrt(static_cast<double>(w))));
  }
  const double d_scale = 1.0 / std::sqrt(static_cast<double>(cfg.D));
  if (cfg.use_safe) {
    m.safe.w_alpha = rng.normal_tensor({1, cfg.D}, d_scale);
    m.safe.w_gamma = rng.normal_tensor({1, cfg.D}, d_scale);
    m.safe.b_gamma = Tensor::zeros({1, cfg.D});
  } else {
    m.safe.w_alpha = Tensor::zeros({1, cfg.D});
    m.safe.w_gamma = Tensor::zeros({1, cfg.D});
    m.safe.b_gamma = Tensor::zeros({1, cfg.D});
  }
  const std::vector<long> rs = effective_strides(cfg);
  for (long l = 0; l < cfg.num_mrta_layers; ++l) {
    MrtaParams p;
    p.strides = rs;
    for (std::size_t k = 0; k < rs.size(); ++k) {
      p.wq.push_back(rng.normal_tensor({cfg.D, cfg.d}, d_scale));
      p.wk.push_back(rng.normal_tensor({cfg.D, cfg.d}, d_scale));
      p.wv.push_back(rng.normal_tensor({cfg.D, cfg.d}, d_scale));
    }
    p.w_logits = Tensor::zeros({static_cast<long>(rs.size()), 1});
    p.wo = rng.normal_tensor({cfg.d, cfg.D}, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    p.ln_gain = Tensor::full({1, cfg.D}, 1.0);
    p.ln_bias = Tensor::zeros({1, cfg.D});
    validate_mrta_params(p, cfg.D, cfg.d);
    m.mrta.push_back(std::move(p));
  }
  const long flat = m.t_prime * cfg.D;
  m.head_w = rng.normal_tensor({flat, cfg.T_p * cfg.C},
                               1.0 / std::sqrt(static_cast<double>(flat)));
  m.head_b = Tensor::zeros({1, cfg.T_p * cfg.C});
  return m;
}

std::vector<NamedParam> parameters(Forecaster& m) {
  const ModelConfig& cfg = m.cfg;
  std::vector<NamedParam> out;
  if (cfg.use_hstm)
    for (long j = 0; j < cfg.J; ++j)
      out.push_back({"hstm.g" + std::to_string(j + 1), &m.bank.g[static_cast<std::size_t>(j)]});
  out.push_back({"embed.w", &m.embed_w});
  out.push_back({"embed.b", &m.embed_b});
  for (long j = 0; j < cfg.J; ++j)
    out.push_back({"scale." + std::to_string(j + 1), &m.scale_proj[static_cast<std::size_t>(j)]});
  if (cfg.use_safe) {
    out.push_back({"safe.w_alpha", &m.safe.w_alpha});
    out.push_back({"safe.w_gamma", &m.safe.w_gamma});
    out.push_back({"safe.b_gamma", &m.safe.b_gamma});
  }
  for (std::size_t l = 0; l < m.mrta.size(); ++l) {
    MrtaParams& p = m.mrta[l];
    const std::string base = "mrta." + std::to_string(l);
    for (std::size_t k = 0; k < p.strides.size(); ++k) {
      const std::string r = std::to_string(p.strides[k]);
      out.push_back({base + ".wq." + r, &p.wq[k]});
      out.push_back({base + ".wk." + r, &p.wk[k]});
      out.push_back({base + ".wv." + r, &p.wv[k]});
    }
    out.push_back({base + ".logits", &p.w_logits});
    out.push_back({base + ".wo", &p.wo});
    out.push_back({base + ".ln_gain", &p.ln_gain});
    out.push_back({base + ".ln_bias", &p.ln_bias});
  }
  out.push_back({"head.w", &m.head_w});
  out.push_back({"head.b", &m.head_b});
  return out;
}

std::vector<std::pair<std::string, Tensor>> parameter_snapshot(const Forecaster& m) {
  // Read-only traversal of the registry.
  auto refs = parameters(const_cast<Forecaster&>(m));
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(refs.size());
  for (const NamedParam& r : refs) out.emplace_back(r.name, *r.value);
  return out;
}

long parameter_count(const Forecaster& m) {
  long n = 0;
  for (const auto& [name, value] : parameter_snapshot(m)) n += value.numel();
  return n;
}

void set_parameters(Forecaster& m, const std::vector<Tensor>& values) {
  auto refs = parameters(m);
  if (values.size() != refs.size())
    throw ContractError("set_parameters: expected " + std::to_string(refs.size()) +
                        " tensors, got " + std::to_string(values.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (!refs[i].value->same_shape(values[i]))
      throw DimensionError("set_parameters: shape mismatch for " + refs[i].name);
    *refs[i].value = values[i];
  }
}

NormStats window_stats(const Tensor& x) {
  const long T = x.rows();
  const long C = x.cols();
  NormStats s{Tensor::zeros({1, C}), Tensor::zeros({1, C})};
  for (long c = 0; c < C; ++c) {
    double mu = 0.0;
    for (long t = 0; t < T; ++t) mu += x.at(t, c);
    mu /= static_cast<double>(T);
    double var = 0.0;
    for (long t = 0; t < T; ++t) {
      const double dev = x.at(t, c) - mu;
      var += dev * dev;
    }
    var /= static_cast<double>(T);
    double sigma = std::sqrt(var);
    if (!(sigma > kSigmaFloor)) sigma = 1.0;
    s.mu.at(0, c) = mu;
    s.sigma.at(0, c) = sigma;
  }
  return s;
}

Tensor normalize_window(const Tensor& x, const NormStats& s) {
  Tensor out = x;
  const long C = x.cols();
  for (long t = 0; t < x.rows(); ++t)
    for (long c = 0; c < C; ++c)
      out.at(t, c) = (x.at(t, c) - s.mu.at(0, c)) / s.sigma.at(0, c);
  return out;
}

Tensor denormalize_window(const Tensor& y, const NormStats& s) {
  Tensor out = y;
  const long C = y.cols();
  for (long t = 0; t < y.rows(); ++t)
    for (long c = 0; c < C; ++c)
      out.at(t, c) = y.at(t, c) * s.sigma.at(0, c) + s.mu.at(0, c);
  return out;
}

Tensor positional_encoding(long t_len, long d_model) {
  Tensor pe = Tensor::zeros({t_len, d_model});
  for (long i = 0; i < d_model; i += 2) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(d_model));
    for (long t = 0; t < t_len; ++t) {
      const double angle = static_cast<double>(t) * freq;
      pe.at(t, i) = std::sin(angle);
      if (i + 1 < d_model) pe.at(t, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor embed(const Forecaster& m, const Tensor& x_norm) {
  require_window(m.cfg, x_norm, "embed");
  Tensor e = dense::matmul(x_norm, m.embed_w);
  const long D = m.cfg.D;
  for (long t = 0; t < e.rows(); ++t)
    for (long i = 0; i < D; ++i) e.at(t, i) += m.embed_b.at(0, i);
  add_inplace(e, m.pos_enc);
  return e;
}

Tensor forward(const Forecaster& m, const Tensor& x, ForwardTrace* trace, long threads) {
  const ModelConfig& cfg = m.cfg;
  require_window(cfg, x, "forward");
  if (!x.all_finite()) throw DataError("forward: input window contains non-finite values");

  const NormStats stats = window_stats(x);
  const Tensor xn = normalize_window(x, stats);
  const Tensor e = embed(m, xn);
  const long stride = 1L << (cfg.J - 1);
  const Tensor e_pooled = pool(e, stride);

  const std::vector<ScatteringCoefficients> sc = full_scattering(xn, m.bank, {}, threads);

  ScaleFeatures f;
  for (long j = 1; j <= cfg.J; ++j) {
    Tensor hj = e_pooled;
    for (long c = 0; c < cfg.C; ++c)
      add_inplace(hj, dense::matmul(group_matrix(sc[static_cast<std::size_t>(c)], cfg.J, j),
                                    m.scale_proj[static_cast<std::size_t>(j - 1)]));
    f.H.push_back(std::move(hj));
  }

  Tensor alpha, gamma;
  if (cfg.use_safe) {
    alpha = scale_attention(context_vectors(f), m.safe.w_alpha);
    gamma = horizon_gate(cfg.T_p, m.safe, cfg.T_p_max);
  } else {
    alpha = Tensor::full({cfg.J, 1}, 1.0 / static_cast<double>(cfg.J));
    gamma = Tensor::full({1, cfg.D}, 1.0);
  }
  if (trace) trace->alpha = alpha;
  Tensor cur = enhance(f, alpha, gamma);

  for (const MrtaParams& p : m.mrta) {
    MrtaLayerTrace lt = mrta_layer(cur, p);
    if (trace) {
      trace->attention.push_back(std::move(lt.attention));
      trace->combine.push_back(std::move(lt.combine_weights));
    }
    cur = std::move(lt.out);
  }

  Tensor flat({1, m.t_prime * cfg.D}, std::move(cur.data));
  Tensor y = dense::matmul(flat, m.head_w);
  add_inplace(y, m.head_b);
  Tensor out({cfg.T_p, cfg.C}, std::move(y.data));
  return denormalize_window(out, stats);
}

TapeForward forward_tape(Tape& tape, const Forecaster& m, const Tensor& x) {
  const ModelConfig& cfg = m.cfg;
  require_window(cfg, x, "forward");
  if (!x.all_finite()) throw DataError("forward: input window contains non-finite values");

  TapeForward out;
  // Leaf creation must follow the parameters() registry order exactly: the
  // trainer reads gradients back by index.
  auto reg = [&](const Tensor& v) {
    const Var lv = tape.leaf(v);
    out.params.push_back(lv);
    return lv;
  };

  std::vector<Var> g_vars;
  for (long j = 0; j < cfg.J; ++j) {
    const Tensor& g = m.bank.g[static_cast<std::size_t>(j)];
    g_vars.push_back(cfg.use_hstm ? reg(g) : tape.constant(g));
  }
  const Var w_e = reg(m.embed_w);
  const Var b_e = reg(m.embed_b);
  std::vector<Var> proj;
  for (long j = 0; j < cfg.J; ++j) proj.push_back(reg(m.scale_proj[static_cast<std::size_t>(j)]));
  Var w_alpha, w_gamma, b_gamma;
  if (cfg.use_safe) {
    w_alpha = reg(m.safe.w_alpha);
    w_gamma = reg(m.safe.w_gamma);
    b_gamma = reg(m.safe.b_gamma);
  }
  std::vector<MrtaVars> layers;
  for (const MrtaParams& p : m.mrta) {
    MrtaVars mv;
    mv.strides = p.strides;
    for (std::size_t k = 0; k < p.strides.size(); ++k) {
      mv.wq.push_back(reg(p.wq[k]));
      mv.wk.push_back(reg(p.wk[k]));
      mv.wv.push_back(reg(p.wv[k]));
    }
    mv.w_logits = reg(p.w_logits);
    mv.wo = reg(p.wo);
    mv.ln_gain = reg(p.ln_gain);
    mv.ln_bias = reg(p.ln_bias);
    layers.push_back(std::move(mv));
  }
  const Var head_w = reg(m.head_w);
  const Var head_b = reg(m.head_b);

  out.stats = window_stats(x);
  const Tensor xn = normalize_window(x, out.stats);
  const Var xv = tape.constant(xn);

  const Var e = tape.add(tape.add_rowvec(tape.matmul(xv, w_e), b_e), tape.constant(m.pos_enc));
  const long stride = 1L << (cfg.J - 1);
  const Var e_pooled = tape.pool_mean_rows(e, stride);

  const TapeFilters filters = build_tape_filters(tape, m.bank, g_vars);
  std::vector<ScatterVars> sc;
  for (long c = 0; c < cfg.C; ++c) {
    Tensor col = Tensor::zeros({cfg.T_s, 1});
    for (long t = 0; t < cfg.T_s; ++t) col.data[static_cast<std::size_t>(t)] = xn.at(t, c);
    sc.push_back(scattering_tape(tape, tape.constant(std::move(col)), m.bank, filters, true));
  }

  std::vector<Var> H;
  for (long j = 1; j <= cfg.J; ++j) {
    Var hj = e_pooled;
    for (long c = 0; c < cfg.C; ++c)
      hj = tape.add(hj, tape.matmul(group_matrix_tape(tape, sc[static_cast<std::size_t>(c)], j),
                                    proj[static_cast<std::size_t>(j - 1)]));
    H.push_back(hj);
  }

  Var alpha, gamma;
  if (cfg.use_safe) {
    alpha = scale_attention_tape(tape, context_vectors_tape(tape, H), w_alpha);
    gamma = horizon_gate_tape(tape, w_gamma, b_gamma, cfg.T_p, cfg.T_p_max);
  } else {
    alpha = tape.constant(Tensor::full({cfg.J, 1}, 1.0 / static_cast<double>(cfg.J)));
    gamma = tape.constant(Tensor::full({1, cfg.D}, 1.0));
  }
  Var cur = enhance_tape(tape, H, alpha, gamma);

  for (const MrtaVars& mv : layers) cur = mrta_layer_tape(tape, cur, mv).out;

  const Var flat = tape.reshape(cur, {1, m.t_prime * cfg.D});
  const Var y = tape.add_rowvec(tape.matmul(flat, head_w), head_b);
  out.y_norm = tape.reshape(y, {cfg.T_p, cfg.C});
  return out;
}

}  // namespace scatterfusion
