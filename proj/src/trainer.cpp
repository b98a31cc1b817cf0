#include "scatterfusion/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/rng.hpp"

namespace scatterfusion {

namespace {

constexpr const char* kOptMagic = "SCATTERFUSION-OPT v";
constexpr long kOptVersion = 1;

void append_f64_le(std::string& out, double v) {
  const char* bytes = reinterpret_cast<const char*>(&v);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(bytes, 8);
  } else {
    for (int b = 7; b >= 0; --b) out.push_back(bytes[b]);
  }
}

double read_f64_le(const char* p) {
  char raw[8];
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(raw, p, 8);
  } else {
    for (int b = 0; b < 8; ++b) raw[b] = p[7 - b];
  }
  double v = 0.0;
  std::memcpy(&v, raw, sizeof(v));
  return v;
}

[[noreturn]] void opt_corrupt(const std::string& path, const std::string& why) {
  throw IoError("optimizer state " + path + ": " + why);
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.lr_min >= 0.0) || !(cfg.lr_max >= 0.0) || cfg.lr_min > cfg.lr_max)
    throw ConfigError("train config: need 0 <= lr_min <= lr_max");
  if (cfg.lr_max > 0.0 && !(cfg.lr_min > 0.0))
    throw ConfigError("train config: lr_min must be positive when lr_max is");
  if (!(cfg.beta1 >= 0.0) || cfg.beta1 >= 1.0 || !(cfg.beta2 >= 0.0) || cfg.beta2 >= 1.0)
    throw ConfigError("train config: betas must lie in [0, 1)");
  if (cfg.patience < 1) throw ConfigError("train config: patience must be at least 1");
  if (!(cfg.eps > 0.0)) throw ConfigError("train config: eps must be positive");
  if (!(cfg.weight_decay >= 0.0))
    throw ConfigError("train config: weight decay must be non-negative");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw ConfigError("train config: epochs and batch size must be positive");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("train config: clip norm must be positive");
  if (cfg.threads < 1) throw ConfigError("train config: threads must be positive");
  if (!(cfg.loss.lambda_t >= 0.0) || !(cfg.loss.lambda_s >= 0.0) ||
      !(cfg.loss.lambda_r >= 0.0) || !(cfg.loss.beta >= 0.0))
    throw ConfigError("train config: loss weights must be non-negative");
}

double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps < 1) throw ContractError("cosine_lr: total_steps must be positive");
  if (step < 0) throw ContractError("cosine_lr: step must be non-negative");
  if (step >= total_steps) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(step) /
                       static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

AdamState make_adam_state(const std::vector<NamedParam>& params) {
  AdamState st;
  for (const NamedParam& p : params) {
    st.m.push_back(Tensor::zeros(p.value->shape));
    st.v.push_back(Tensor::zeros(p.value->shape));
  }
  return st;
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_gradients: max norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

StepOutcome adamw_step(const std::vector<NamedParam>& params,
                       const std::vector<Tensor>& grads, AdamState& state, double lr,
                       const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw DimensionError("adamw_step: parameter, gradient, and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].value->same_shape(grads[i]) || !state.m[i].same_shape(grads[i]))
      throw DimensionError("adamw_step: shape mismatch at parameter '" + params[i].name +
                           "'");

  StepOutcome out;
  bool finite = true;
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data) {
      if (!std::isfinite(v)) finite = false;
      sq += v * v;
    }
  out.grad_norm = std::sqrt(sq);
  if (!finite) {
    out.applied = false;
    return out;
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].value;
    for (std::size_t k = 0; k < w.data.size(); ++k) {
      const double g = grads[i].data[k];
      double& m = state.m[i].data[k];
      double& v = state.v[i].data[k];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      w.data[k] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                         cfg.weight_decay * w.data[k]);
    }
  }
  return out;
}

void save_optimizer_state(const AdamState& state, const std::string& path) {
  if (state.m.size() != state.v.size())
    throw DimensionError("optimizer state: moment counts differ");
  nlohmann::json header;
  header["format"] = "scatterfusion-optimizer";
  header["version"] = kOptVersion;
  header["step"] = state.step;
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    if (!state.m[i].same_shape(state.v[i]))
      throw DimensionError("optimizer state: moment shapes differ");
    shapes.push_back(state.m[i].shape);
  }
  header["shapes"] = shapes;
  const std::string h = header.dump();
  std::string blob = std::string(kOptMagic) + std::to_string(kOptVersion) + " " +
                     std::to_string(h.size()) + "\n" + h;
  for (const Tensor& t : state.m)
    for (double v : t.data) append_f64_le(blob, v);
  for (const Tensor& t : state.v)
    for (double v : t.data) append_f64_le(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing " + path);
}

AdamState load_optimizer_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();

  const std::size_t nl = blob.find('\n');
  if (nl == std::string::npos) opt_corrupt(path, "missing header line");
  const std::string magic = blob.substr(0, nl);
  if (magic.rfind(kOptMagic, 0) != 0) opt_corrupt(path, "not an optimizer state file");
  long version = 0;
  std::size_t header_len = 0;
  {
    std::istringstream line(magic.substr(std::strlen(kOptMagic)));
    line >> version >> header_len;
    if (line.fail()) opt_corrupt(path, "unparsable header line");
  }
  if (version != kOptVersion)
    throw IoError("optimizer state " + path + ": unsupported version " +
                  std::to_string(version));
  if (nl + 1 + header_len > blob.size()) opt_corrupt(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(nl + 1, header_len));
  } catch (const nlohmann::json::exception&) {
    opt_corrupt(path, "unparsable header");
  }
  if (!header.contains("format") || header["format"] != "scatterfusion-optimizer" ||
      !header.contains("step") || !header.contains("shapes"))
    opt_corrupt(path, "malformed header");

  AdamState st;
  st.step = header["step"].get<long>();
  if (st.step < 0) opt_corrupt(path, "negative step");
  std::size_t total = 0;
  std::vector<std::vector<std::int64_t>> shapes;
  for (const auto& s : header["shapes"]) {
    std::vector<std::int64_t> shape = s.get<std::vector<std::int64_t>>();
    if (shape.empty()) opt_corrupt(path, "bad tensor shape in header");
    std::size_t numel = 1;
    for (std::int64_t d : shape) {
      if (d < 1) opt_corrupt(path, "bad tensor shape in header");
      numel *= static_cast<std::size_t>(d);
    }
    total += numel;
    shapes.push_back(std::move(shape));
  }
  const std::size_t body = nl + 1 + header_len;
  if (blob.size() - body != 2 * total * sizeof(double))
    opt_corrupt(path, "parameter block size mismatch");

  const char* p = blob.data() + body;
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& shape : shapes) {
      Tensor t = Tensor::zeros(shape);
      for (double& v : t.data) {
        v = read_f64_le(p);
        p += sizeof(double);
      }
      (pass == 0 ? st.m : st.v).push_back(std::move(t));
    }
  return st;
}

MetricsReport metrics_for(const std::vector<Tensor>& predictions,
                          const WindowSet& split, const std::vector<long>& horizons) {
  if (split.targets.empty()) throw DataError("metrics: empty split");
  if (predictions.size() != split.targets.size())
    throw DimensionError("metrics: prediction count differs from window count");
  const long t_p = split.targets[0].rows();
  const long c = split.targets[0].cols();
  std::vector<long> hs = horizons.empty() ? std::vector<long>{t_p} : horizons;
  for (long h : hs)
    if (h < 1 || h > t_p)
      throw ContractError("metrics: horizon " + std::to_string(h) + " outside [1, " +
                          std::to_string(t_p) + "]");

  std::vector<double> row_sq(t_p, 0.0), row_ab(t_p, 0.0);
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const Tensor& y = predictions[k];
    const Tensor& t = split.targets[k];
    if (!y.same_shape(t) || y.rows() != t_p || y.cols() != c)
      throw DimensionError("metrics: shape mismatch in window " + std::to_string(k));
    for (long r = 0; r < t_p; ++r)
      for (long ch = 0; ch < c; ++ch) {
        const double d = y.at(r, ch) - t.at(r, ch);
        row_sq[r] += d * d;
        row_ab[r] += std::abs(d);
      }
  }

  MetricsReport rep;
  const double n = static_cast<double>(predictions.size());
  for (long h : hs) {
    double sq = 0.0, ab = 0.0;
    for (long r = 0; r < h; ++r) {
      sq += row_sq[r];
      ab += row_ab[r];
    }
    const double denom = n * static_cast<double>(h) * static_cast<double>(c);
    rep.metrics.push_back({h, sq / denom, ab / denom});
  }
  return rep;
}

MetricsReport evaluate(const Forecaster& m, const WindowSet& split,
                       const std::vector<long>& horizons, long threads,
                       std::vector<Tensor>* predictions) {
  if (split.inputs.empty()) throw DataError("evaluate: empty split");
  std::vector<Tensor> preds;
  preds.reserve(split.inputs.size());
  std::vector<double> alpha_sum(m.cfg.J, 0.0);
  for (const Tensor& x : split.inputs) {
    ForwardTrace trace;
    preds.push_back(forward(m, x, &trace, threads));
    for (long j = 0; j < m.cfg.J; ++j) alpha_sum[j] += trace.alpha.at(j, 0);
  }
  MetricsReport rep = metrics_for(preds, split, horizons);
  for (double a : alpha_sum)
    rep.alpha.push_back(a / static_cast<double>(split.inputs.size()));
  if (predictions) *predictions = std::move(preds);
  return rep;
}

Tensor persistence_forecast(const Tensor& x, long t_p) {
  if (x.rows() < 1 || t_p < 1)
    throw ContractError("persistence_forecast: need at least one row and step");
  Tensor y = Tensor::zeros({t_p, x.cols()});
  for (long t = 0; t < t_p; ++t)
    for (long c = 0; c < x.cols(); ++c) y.at(t, c) = x.at(x.rows() - 1, c);
  return y;
}

Tensor ols_forecast(const Tensor& x, long t_p) {
  const long n = x.rows();
  if (n < 2 || t_p < 1)
    throw ContractError("ols_forecast: need at least two rows and one step");
  Tensor y = Tensor::zeros({t_p, x.cols()});
  const double tbar = 0.5 * static_cast<double>(n - 1);
  double den = 0.0;
  for (long t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tbar;
    den += dt * dt;
  }
  for (long c = 0; c < x.cols(); ++c) {
    double xbar = 0.0;
    for (long t = 0; t < n; ++t) xbar += x.at(t, c);
    xbar /= static_cast<double>(n);
    double num = 0.0;
    for (long t = 0; t < n; ++t)
      num += (static_cast<double>(t) - tbar) * (x.at(t, c) - xbar);
    const double slope = num / den;
    const double intercept = xbar - slope * tbar;
    for (long t = 0; t < t_p; ++t)
      y.at(t, c) = intercept + slope * static_cast<double>(n + t);
  }
  return y;
}

MetricsReport evaluate_baseline(const std::string& kind, const WindowSet& split,
                                const std::vector<long>& horizons) {
  if (split.targets.empty()) throw DataError("evaluate_baseline: empty split");
  if (kind != "persistence" && kind != "ols")
    throw ConfigError("evaluate_baseline: unknown kind '" + kind + "'");
  const long t_p = split.targets[0].rows();
  std::vector<Tensor> preds;
  preds.reserve(split.inputs.size());
  for (const Tensor& x : split.inputs)
    preds.push_back(kind == "persistence" ? persistence_forecast(x, t_p)
                                          : ols_forecast(x, t_p));
  return metrics_for(preds, split, horizons);
}

TrainResult train(Forecaster& model, const Dataset& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (data.values.cols() != model.cfg.C)
    throw ConfigError("train: dataset has " + std::to_string(data.values.cols()) +
                      " channels, model expects " + std::to_string(model.cfg.C));

  const long t_s = model.cfg.T_s;
  const long t_p = model.cfg.T_p;
  const SplitRanges ranges = split(data, SplitSpec{}, t_s, t_p);
  const WindowSet train_ws = make_windows(data, ranges.train_begin, ranges.train_end,
                                          t_s, t_p);
  const WindowSet val_ws = make_windows(data, ranges.val_window_begin, ranges.val_end,
                                        t_s, t_p);

  // Seasonal period for the loss, detected on the training rows only and
  // capped so a T_p-length horizon can still be decomposed.
  Tensor train_rows = Tensor::zeros({ranges.train_end, model.cfg.C});
  for (long t = 0; t < ranges.train_end; ++t)
    for (long c = 0; c < model.cfg.C; ++c) train_rows.at(t, c) = data.values.at(t, c);
  const long detected = detect_period(train_rows, t_s);
  const long loss_period = std::max(1L, std::min(detected, t_p / 2));
  const bool use_tsr = model.cfg.use_tsr_loss && cfg.loss.beta > 0.0 && t_p >= 2;

  std::vector<NamedParam> params = parameters(model);
  AdamState state = make_adam_state(params);
  const long n_train = static_cast<long>(train_ws.inputs.size());
  const long batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = cfg.epochs * batches_per_epoch;

  Rng shuffle_rng(cfg.seed);
  std::vector<long> order(n_train);
  std::iota(order.begin(), order.end(), 0L);

  TrainResult result;
  result.loss_period = loss_period;
  MetricsReport& rep = result.report;
  double best_val = std::numeric_limits<double>::infinity();
  long stale_epochs = 0;
  long gstep = 0;

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (long i = n_train - 1; i > 0; --i) {
      const long j = shuffle_rng.uniform_int(i + 1);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const long lo = b * cfg.batch_size;
      const long hi = std::min(n_train, lo + cfg.batch_size);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (const NamedParam& p : params) grads.push_back(Tensor::zeros(p.value->shape));

      double batch_final = 0.0, batch_mse = 0.0;
      for (long iw = lo; iw < hi; ++iw) {
        const long idx = order[iw];
        Tape tape;
        const TapeForward tf = forward_tape(tape, model, train_ws.inputs[idx]);
        const Var target =
            tape.constant(normalize_window(train_ws.targets[idx], tf.stats));
        const Var mse_v = tape.mse(tf.y_norm, target);
        const Var loss = use_tsr
                             ? final_loss_tape(tape, target, tf.y_norm, cfg.loss,
                                               loss_period)
                             : mse_v;
        tape.backward(loss);
        batch_final += tape.value(loss).data[0];
        batch_mse += tape.value(mse_v).data[0];
        for (std::size_t i = 0; i < grads.size(); ++i) {
          const Tensor& g = tape.grad(tf.params[i]);
          for (std::size_t k = 0; k < g.data.size(); ++k) grads[i].data[k] += g.data[k];
        }
      }

      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (Tensor& g : grads)
        for (double& v : g.data) v *= inv;
      batch_final *= inv;
      batch_mse *= inv;

      const double norm = clip_gradients(grads, cfg.clip_norm);
      const double lr = cosine_lr(gstep, total_steps, cfg.lr_max, cfg.lr_min);
      const StepOutcome out = adamw_step(params, grads, state, lr, cfg);

      StepRecord rec;
      rec.step = gstep;
      rec.lr = lr;
      rec.loss_final = batch_final;
      rec.loss_mse = batch_mse;
      rec.grad_norm = norm;
      rec.clipped = norm > cfg.clip_norm;
      rec.applied = out.applied;
      if (!rec.applied) ++rep.rejected_steps;
      if (rec.clipped) ++rep.clip_events;
      rep.steps.push_back(rec);
      epoch_loss += batch_final * static_cast<double>(hi - lo);
      ++gstep;
    }
    // Window-weighted so the epoch loss is the mean over windows, not batches.
    rep.epoch_train_loss.push_back(epoch_loss / static_cast<double>(n_train));

    const double vmse = evaluate(model, val_ws, {}, cfg.threads).metrics[0].mse;
    rep.epoch_val_mse.push_back(vmse);
    if (vmse < best_val) {
      best_val = vmse;
      rep.best_epoch = epoch;
      stale_epochs = 0;
      result.best = snapshot(model, gstep, loss_period);
    } else if (++stale_epochs >= cfg.patience) {
      break;
    }
  }

  load_into(model, result.best);
  const MetricsReport at_best = evaluate(model, val_ws, {}, cfg.threads);
  rep.metrics = at_best.metrics;
  rep.alpha = at_best.alpha;
  return result;
}

}  // namespace scatterfusion
