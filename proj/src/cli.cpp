#include "scatterfusion/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scatterfusion/checkpoint.hpp"
#include "scatterfusion/dataio.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/filterbank.hpp"
#include "scatterfusion/model.hpp"
#include "scatterfusion/rng.hpp"
#include "scatterfusion/scattering.hpp"
#include "scatterfusion/tensor.hpp"
#include "scatterfusion/trainer.hpp"
#include "scatterfusion/tsr.hpp"
#include "scatterfusion/util.hpp"

namespace scatterfusion {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr long kSchemaVersion = 1;

// Flag-level mistakes; mapped to exit code 2 like CLI11's own parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::vector<long> parse_long_list(const std::string& text, const char* flag) {
  std::vector<long> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": cannot parse '" + item + "' as an integer");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

// "3..6" -> {3,4,5,6}; also accepts a plain comma list.
std::vector<long> parse_scale_range(const std::string& text) {
  const std::size_t dots = text.find("..");
  std::vector<long> out;
  if (dots == std::string::npos) {
    out = parse_long_list(text, "--J");
  } else {
    const std::vector<long> lo = parse_long_list(text.substr(0, dots), "--J");
    const std::vector<long> hi = parse_long_list(text.substr(dots + 2), "--J");
    if (lo.size() != 1 || hi.size() != 1 || lo[0] > hi[0])
      throw UsageError("--J: expected 'lo..hi' with lo <= hi");
    for (long j = lo[0]; j <= hi[0]; ++j) out.push_back(j);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 2) throw UsageError("--J: scales must be >= 2");
    if (i > 0 && out[i] <= out[i - 1]) throw UsageError("--J: scales must be strictly increasing");
  }
  return out;
}

double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Tensor slice_rows(const Tensor& v, long begin, long count) {
  Tensor out = Tensor::zeros({count, v.cols()});
  for (long i = 0; i < count; ++i)
    for (long c = 0; c < v.cols(); ++c) out.at(i, c) = v.at(begin + i, c);
  return out;
}

fs::path prepare_out_dir(const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

// ---- config file -----------------------------------------------------------

json read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config " + path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path + ": top level must be an object");
  if (!j.contains("schema_version")) throw ConfigError("config " + path + ": missing schema_version");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<long>() != kSchemaVersion)
    throw ConfigError("config " + path + ": unsupported schema_version");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "schema_version" && key != "model" && key != "train")
      throw ConfigError("config " + path + ": unknown section '" + key + "'");
  }
  return j;
}

json merge_section(const json& file, const char* section, json defaults) {
  if (!file.contains(section)) return defaults;
  const json& sec = file[section];
  if (!sec.is_object()) throw ConfigError(std::string("config: '") + section + "' must be an object");
  for (const auto& [key, value] : sec.items()) {
    if (!defaults.contains(key))
      throw ConfigError(std::string("config: unknown ") + section + " field '" + key + "'");
    defaults[key] = value;
  }
  return defaults;
}

struct FileModelConfig {
  ModelConfig cfg;
  bool channels_explicit = false;
};

FileModelConfig model_config_from(const json& file) {
  FileModelConfig out;
  const json merged = merge_section(file, "model", config_to_json(ModelConfig{}));
  try {
    out.cfg = config_from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: model section: ") + e.what());
  }
  out.channels_explicit = file.contains("model") && file["model"].contains("channels");
  return out;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"lr_max", c.lr_max},
              {"lr_min", c.lr_min},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"lambda_t", c.loss.lambda_t},
              {"lambda_s", c.loss.lambda_s},
              {"lambda_r", c.loss.lambda_r},
              {"beta", c.loss.beta},
              {"seed", c.seed},
              {"threads", c.threads}};
}

TrainConfig train_config_from(const json& file) {
  const json merged = merge_section(file, "train", train_config_to_json(TrainConfig{}));
  TrainConfig c;
  try {
    c.lr_max = merged.at("lr_max").get<double>();
    c.lr_min = merged.at("lr_min").get<double>();
    c.weight_decay = merged.at("weight_decay").get<double>();
    c.beta1 = merged.at("beta1").get<double>();
    c.beta2 = merged.at("beta2").get<double>();
    c.eps = merged.at("eps").get<double>();
    c.epochs = merged.at("epochs").get<long>();
    c.batch_size = merged.at("batch_size").get<long>();
    c.patience = merged.at("patience").get<long>();
    c.clip_norm = merged.at("clip_norm").get<double>();
    c.loss.lambda_t = merged.at("lambda_t").get<double>();
    c.loss.lambda_s = merged.at("lambda_s").get<double>();
    c.loss.lambda_r = merged.at("lambda_r").get<double>();
    c.loss.beta = merged.at("beta").get<double>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.threads = merged.at("threads").get<long>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: train section: ") + e.what());
  }
  return c;
}

// ---- run manifest ----------------------------------------------------------

struct ManifestInput {
  std::string name;
  std::string path;
};

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, long threads, bool deterministic,
                    const std::vector<ManifestInput>& inputs, std::vector<std::string> outputs) {
  json m;
  m["schema_version"] = kSchemaVersion;
  m["tool"] = "scatterfusion";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["threads"] = threads;
  m["deterministic"] = deterministic;
  json ins = json::array();
  for (const ManifestInput& in : inputs)
    ins.push_back(json{{"name", in.name}, {"path", in.path}, {"sha256", sha256_file_hex(in.path)}});
  m["inputs"] = ins;
  m["outputs"] = json(std::move(outputs));
  write_json_file(dir / "manifest.json", m);
}

json horizons_to_json(const std::vector<HorizonMetrics>& hs) {
  json arr = json::array();
  for (const HorizonMetrics& h : hs)
    arr.push_back(json{{"horizon", h.horizon}, {"mse", h.mse}, {"mae", h.mae}});
  return arr;
}

// ---- ablation helpers ------------------------------------------------------

void apply_config_ablation(ModelConfig& cfg, const std::string& which) {
  if (which == "hstm")
    cfg.use_hstm = false;
  else if (which == "safe")
    cfg.use_safe = false;
  else if (which == "mrta")
    cfg.use_mrta = false;
  else if (which == "tsr")
    cfg.use_tsr_loss = false;
  else
    throw ConfigError("unknown ablation '" + which + "'");
}

// Evaluation-time bypass of a trained block, leaving the rest of the model as
// the checkpoint set it.
void apply_runtime_ablation(Forecaster& m, const std::string& which) {
  if (which == "hstm") {
    FilterBank fresh = build_filterbank(m.bank.J, m.bank.T, m.bank.K_g);
    m.bank.g = std::move(fresh.g);  // back to the identity kernels
    m.cfg.use_hstm = false;
  } else if (which == "safe") {
    m.cfg.use_safe = false;  // forward falls back to uniform scale weights
  } else if (which == "mrta") {
    m.cfg.use_mrta = false;
    for (MrtaParams& layer : m.mrta) {
      layer.strides = {1};
      layer.wq.resize(1);
      layer.wk.resize(1);
      layer.wv.resize(1);
      layer.w_logits = Tensor::zeros({1, 1});
    }
  } else if (which == "tsr") {
    m.cfg.use_tsr_loss = false;  // loss-time flag; forecasts are unchanged
  } else {
    throw ConfigError("unknown ablation '" + which + "'");
  }
}

// ---- scatter ---------------------------------------------------------------

struct ScatterArgs {
  std::string data;
  std::string out = "scatter-out";
  long J = 4;
  long k_g = 7;
  bool no_subsample = false;
  bool dump_filters = false;
  long threads = 1;
  bool deterministic = false;
};

int run_scatter(const ScatterArgs& a) {
  const Dataset ds = load_csv(a.data);
  const long t = ds.values.rows();
  const FilterBank bank = build_filterbank(a.J, t, a.k_g);
  ScatterOptions opt;
  opt.subsample = !a.no_subsample;
  const std::vector<ScatteringCoefficients> coeffs = full_scattering(ds.values, bank, opt, a.threads);
  if (coeffs.empty()) throw DataError("scatter: no channels in " + a.data);

  const fs::path dir = prepare_out_dir(a.out);
  const fs::path coeff_path = dir / "coefficients.csv";
  {
    std::ofstream outf(coeff_path, std::ios::binary);
    if (!outf) throw IoError("cannot write " + coeff_path.string());
    outf << "channel,order,j1,j2,t,value\n";
    for (std::size_t c = 0; c < coeffs.size(); ++c) {
      const ScatteringCoefficients& sc = coeffs[c];
      for (long i = 0; i < sc.t_out; ++i)
        outf << c << ",0,0,0," << i << "," << fmt_value(sc.s0.data[static_cast<std::size_t>(i)])
             << "\n";
      for (std::size_t j = 0; j < sc.s1.size(); ++j)
        for (long i = 0; i < sc.t_out; ++i)
          outf << c << ",1," << (j + 1) << ",0," << i << ","
               << fmt_value(sc.s1[j].data[static_cast<std::size_t>(i)]) << "\n";
      for (std::size_t p = 0; p < sc.s2.size(); ++p)
        for (long i = 0; i < sc.t_out; ++i)
          outf << c << ",2," << sc.path_index[p].first << "," << sc.path_index[p].second << ","
               << i << "," << fmt_value(sc.s2[p].data[static_cast<std::size_t>(i)]) << "\n";
    }
  }
  std::vector<std::string> outputs = {"coefficients.csv"};

  if (a.dump_filters) {
    const fs::path fpath = dir / "filters.csv";
    std::ofstream outf(fpath, std::ios::binary);
    if (!outf) throw IoError("cannot write " + fpath.string());
    outf << "name,j,t,value\n";
    for (long j = 0; j < bank.J; ++j) {
      const ComplexTensor& psi = bank.psi[static_cast<std::size_t>(j)];
      for (long i = 0; i < psi.real.rows(); ++i)
        outf << "psi_re," << (j + 1) << "," << i << ","
             << fmt_value(psi.real.data[static_cast<std::size_t>(i)]) << "\n";
      for (long i = 0; i < psi.imag.rows(); ++i)
        outf << "psi_im," << (j + 1) << "," << i << ","
             << fmt_value(psi.imag.data[static_cast<std::size_t>(i)]) << "\n";
      const Tensor& g = bank.g[static_cast<std::size_t>(j)];
      for (long i = 0; i < g.rows(); ++i)
        outf << "g," << (j + 1) << "," << i << "," << fmt_value(g.data[static_cast<std::size_t>(i)])
             << "\n";
    }
    for (long i = 0; i < bank.phi.rows(); ++i)
      outf << "phi," << bank.J << "," << i << ","
           << fmt_value(bank.phi.data[static_cast<std::size_t>(i)]) << "\n";
    outputs.push_back("filters.csv");
  }

  const json config{{"J", a.J},
                    {"k_g", a.k_g},
                    {"subsample", !a.no_subsample},
                    {"dump_filters", a.dump_filters}};
  write_manifest(dir, "scatter", config, 0, a.threads, a.deterministic, {{"data", a.data}}, outputs);
  const long paths = 1 + bank.J + static_cast<long>(coeffs[0].s2.size());
  std::cout << "scatter: " << coeffs.size() << " channels x " << paths << " paths x "
            << coeffs[0].t_out << " samples -> " << coeff_path.string() << "\n";
  return 0;
}

// ---- decompose -------------------------------------------------------------

struct DecomposeArgs {
  std::string data;
  std::string out = "decompose-out";
  long period = 0;
};

int run_decompose(const DecomposeArgs& a) {
  if (a.period < 0) throw UsageError("--period: must be positive (omit or 0 to auto-detect)");
  const Dataset ds = load_csv(a.data);
  const long t = ds.values.rows();
  const long period = a.period > 0 ? a.period : detect_period(ds.values, t);
  const TsrComponents comp = decompose(ds.values, period);

  const fs::path dir = prepare_out_dir(a.out);
  const fs::path path = dir / "decompose.csv";
  {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw IoError("cannot write " + path.string());
    outf << "t,channel,trend,seasonal,residual\n";
    for (long i = 0; i < t; ++i)
      for (long c = 0; c < ds.values.cols(); ++c)
        outf << i << "," << c << "," << fmt_value(comp.trend.at(i, c)) << ","
             << fmt_value(comp.seasonal.at(i, c)) << "," << fmt_value(comp.residual.at(i, c))
             << "\n";
  }
  const json config{{"period_flag", a.period}, {"period", period}};
  write_manifest(dir, "decompose", config, 0, 1, false, {{"data", a.data}}, {"decompose.csv"});
  std::cout << "decompose: period " << period << (a.period > 0 ? "" : " (detected)") << " -> "
            << path.string() << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out = "run";
  std::vector<std::string> ablate;
  long t_s = 96, t_p = 24, t_p_max = 720, d_model = 64, d_attn = 32, scales = 4;
  std::string strides;
  long mrta_layers = 2, k_g = 7;
  long epochs = 10, batch_size = 32, patience = 5;
  double lr_max = 1e-3, lr_min = 1e-5, weight_decay = 1e-2, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 5.0, lambda_t = 1.0, lambda_s = 1.0, lambda_r = 0.5, beta = 0.5;
  std::uint64_t seed = 1;
  long threads = 1;
  bool deterministic = false;
};

int run_train(const CLI::App& cmd, const TrainArgs& a) {
  json file{{"schema_version", kSchemaVersion}};
  if (!a.config.empty()) file = read_config_file(a.config);
  FileModelConfig fm = model_config_from(file);
  ModelConfig mc = fm.cfg;
  TrainConfig tc = train_config_from(file);

  if (cmd.count("--t-s")) mc.T_s = a.t_s;
  if (cmd.count("--t-p")) mc.T_p = a.t_p;
  if (cmd.count("--t-p-max")) mc.T_p_max = a.t_p_max;
  if (cmd.count("--d-model")) mc.D = a.d_model;
  if (cmd.count("--d-attn")) mc.d = a.d_attn;
  if (cmd.count("--scales")) mc.J = a.scales;
  if (cmd.count("--strides")) mc.strides = parse_long_list(a.strides, "--strides");
  if (cmd.count("--mrta-layers")) mc.num_mrta_layers = a.mrta_layers;
  if (cmd.count("--k-g")) mc.K_g = a.k_g;
  if (cmd.count("--epochs")) tc.epochs = a.epochs;
  if (cmd.count("--batch-size")) tc.batch_size = a.batch_size;
  if (cmd.count("--patience")) tc.patience = a.patience;
  if (cmd.count("--lr-max")) tc.lr_max = a.lr_max;
  if (cmd.count("--lr-min")) tc.lr_min = a.lr_min;
  if (cmd.count("--weight-decay")) tc.weight_decay = a.weight_decay;
  if (cmd.count("--beta1")) tc.beta1 = a.beta1;
  if (cmd.count("--beta2")) tc.beta2 = a.beta2;
  if (cmd.count("--eps")) tc.eps = a.eps;
  if (cmd.count("--clip-norm")) tc.clip_norm = a.clip_norm;
  if (cmd.count("--lambda-t")) tc.loss.lambda_t = a.lambda_t;
  if (cmd.count("--lambda-s")) tc.loss.lambda_s = a.lambda_s;
  if (cmd.count("--lambda-r")) tc.loss.lambda_r = a.lambda_r;
  if (cmd.count("--beta")) tc.loss.beta = a.beta;
  if (cmd.count("--seed")) {
    mc.seed = a.seed;
    tc.seed = a.seed;
  }
  if (cmd.count("--threads")) tc.threads = a.threads;

  const Dataset ds = load_csv(a.data);
  if (fm.channels_explicit && mc.C != ds.values.cols())
    throw ConfigError("config sets channels = " + std::to_string(mc.C) + " but " + a.data +
                      " has " + std::to_string(ds.values.cols()));
  mc.C = ds.values.cols();
  for (const std::string& ab : a.ablate) apply_config_ablation(mc, ab);

  Forecaster model = make_forecaster(mc);
  const TrainResult res = train(model, ds, tc);

  const fs::path dir = prepare_out_dir(a.out);
  save_checkpoint(res.best, (dir / "checkpoint.bin").string());

  {
    const fs::path log_path = dir / "train_log.csv";
    std::ofstream outf(log_path, std::ios::binary);
    if (!outf) throw IoError("cannot write " + log_path.string());
    outf << "step,lr,loss_final,loss_mse,grad_norm,clipped,applied\n";
    for (const StepRecord& s : res.report.steps)
      outf << s.step << "," << fmt_value(s.lr) << "," << fmt_value(s.loss_final) << ","
           << fmt_value(s.loss_mse) << "," << fmt_value(s.grad_norm) << "," << (s.clipped ? 1 : 0)
           << "," << (s.applied ? 1 : 0) << "\n";
  }

  json metrics;
  metrics["schema_version"] = kSchemaVersion;
  metrics["split"] = "val";
  metrics["horizons"] = horizons_to_json(res.report.metrics);
  metrics["alpha"] = res.report.alpha;
  metrics["epoch_train_loss"] = res.report.epoch_train_loss;
  metrics["epoch_val_mse"] = res.report.epoch_val_mse;
  metrics["best_epoch"] = res.report.best_epoch;
  metrics["loss_period"] = res.loss_period;
  metrics["steps"] = static_cast<long>(res.report.steps.size());
  metrics["rejected_steps"] = res.report.rejected_steps;
  metrics["clip_events"] = res.report.clip_events;
  write_json_file(dir / "metrics.json", metrics);

  const json config{{"model", config_to_json(mc)},
                    {"train", train_config_to_json(tc)},
                    {"ablate", a.ablate}};
  write_manifest(dir, "train", config, tc.seed, tc.threads, a.deterministic, {{"data", a.data}},
                 {"checkpoint.bin", "metrics.json", "train_log.csv"});

  std::cout << "train: " << res.report.epoch_train_loss.size() << " epochs, "
            << res.report.steps.size() << " steps, best epoch " << res.report.best_epoch
            << ", val mse " << fmt_value(res.report.metrics[0].mse) << " -> " << dir.string()
            << "\n";
  return 0;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string out = "predict-out";
  long start = -1;
  long threads = 1;
  bool deterministic = false;
};

int run_predict(const CLI::App& cmd, const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Forecaster m = restore(ck);
  const Dataset ds = load_csv(a.data);
  if (ds.values.cols() != m.cfg.C)
    throw ConfigError("predict: " + a.data + " has " + std::to_string(ds.values.cols()) +
                      " channels but the checkpoint expects " + std::to_string(m.cfg.C));
  const long n = ds.values.rows();
  const long start = cmd.count("--start") ? a.start : n - m.cfg.T_s;
  if (start < 0 || start + m.cfg.T_s > n)
    throw DataError("predict: input window [" + std::to_string(start) + ", " +
                    std::to_string(start + m.cfg.T_s) + ") is outside the " + std::to_string(n) +
                    " data rows");
  const Tensor x = slice_rows(ds.values, start, m.cfg.T_s);
  const Tensor y = forward(m, x, nullptr, a.threads);

  const fs::path dir = prepare_out_dir(a.out);
  const fs::path path = dir / "predictions.csv";
  {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw IoError("cannot write " + path.string());
    outf << "t,channel,y_pred\n";
    for (long i = 0; i < y.rows(); ++i)
      for (long c = 0; c < y.cols(); ++c)
        outf << i << "," << c << "," << fmt_value(y.at(i, c)) << "\n";
  }
  const json config{{"start", start}, {"t_s", m.cfg.T_s}, {"t_p", m.cfg.T_p},
                    {"model", config_to_json(m.cfg)}};
  write_manifest(dir, "predict", config, 0, a.threads, a.deterministic,
                 {{"checkpoint", a.checkpoint}, {"data", a.data}}, {"predictions.csv"});
  std::cout << "predict: rows [" << start << ", " << (start + m.cfg.T_s) << ") -> "
            << m.cfg.T_p << " steps in " << path.string() << "\n";
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string out = "eval-out";
  std::string split_name = "test";
  std::string horizons;
  std::vector<std::string> ablate;
  long stride = 1;
  bool strict_boundary = false;
  long threads = 1;
  bool deterministic = false;
};

int run_evaluate(const EvaluateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  Forecaster m = restore(ck);
  const Dataset ds = load_csv(a.data);
  if (ds.values.cols() != m.cfg.C)
    throw ConfigError("evaluate: " + a.data + " has " + std::to_string(ds.values.cols()) +
                      " channels but the checkpoint expects " + std::to_string(m.cfg.C));

  const SplitRanges r = split(ds, SplitSpec{}, m.cfg.T_s, m.cfg.T_p, a.strict_boundary);
  long begin = 0, end = 0;
  if (a.split_name == "train") {
    begin = r.train_begin;
    end = r.train_end;
  } else if (a.split_name == "val") {
    begin = r.val_window_begin;
    end = r.val_end;
  } else {
    begin = r.test_window_begin;
    end = r.test_end;
  }
  const WindowSet ws = make_windows(ds, begin, end, m.cfg.T_s, m.cfg.T_p, a.stride);

  for (const std::string& ab : a.ablate) apply_runtime_ablation(m, ab);
  std::vector<long> horizons;
  if (!a.horizons.empty()) horizons = parse_long_list(a.horizons, "--horizons");

  std::vector<Tensor> preds;
  const MetricsReport rep = evaluate(m, ws, horizons, a.threads, &preds);
  const MetricsReport pers = evaluate_baseline("persistence", ws, horizons);
  const MetricsReport ols = evaluate_baseline("ols", ws, horizons);

  const fs::path dir = prepare_out_dir(a.out);
  write_predictions_csv((dir / "predictions.csv").string(), ws.targets, preds);

  json metrics;
  metrics["schema_version"] = kSchemaVersion;
  metrics["split"] = a.split_name;
  metrics["windows"] = static_cast<long>(ws.inputs.size());
  metrics["ablate"] = a.ablate;
  metrics["model"] = horizons_to_json(rep.metrics);
  metrics["alpha"] = rep.alpha;
  metrics["baselines"] =
      json{{"persistence", horizons_to_json(pers.metrics)}, {"ols", horizons_to_json(ols.metrics)}};
  write_json_file(dir / "metrics.json", metrics);

  const json config{{"split", a.split_name},
                    {"horizons", horizons},
                    {"stride", a.stride},
                    {"strict_boundary", a.strict_boundary},
                    {"ablate", a.ablate},
                    {"model", config_to_json(m.cfg)}};
  write_manifest(dir, "evaluate", config, 0, a.threads, a.deterministic,
                 {{"checkpoint", a.checkpoint}, {"data", a.data}},
                 {"predictions.csv", "metrics.json"});

  std::cout << "evaluate: split " << a.split_name << ", " << ws.inputs.size() << " windows";
  if (!a.ablate.empty()) {
    std::cout << ", ablate";
    for (const std::string& ab : a.ablate) std::cout << " " << ab;
  }
  std::cout << "\n";
  std::cout << "horizon        mse            mae\n";
  for (const HorizonMetrics& h : rep.metrics)
    std::cout << std::string(7 - std::min<std::size_t>(7, std::to_string(h.horizon).size()), ' ')
              << h.horizon << "   " << fmt_fixed(h.mse, 9) << "   " << fmt_fixed(h.mae, 9) << "\n";
  std::cout << "baseline persistence: mse " << fmt_fixed(pers.metrics.back().mse, 9) << ", mae "
            << fmt_fixed(pers.metrics.back().mae, 9) << "\n";
  std::cout << "baseline ols: mse " << fmt_fixed(ols.metrics.back().mse, 9) << ", mae "
            << fmt_fixed(ols.metrics.back().mae, 9) << "\n";
  for (const std::string& ab : a.ablate)
    if (ab == "tsr")
      std::cout << "note: tsr shapes the training loss only; forecasts are unchanged\n";
  return 0;
}

// ---- check-invariance ------------------------------------------------------

struct CheckArgs {
  std::string j_range = "3..6";
  long signals = 10;
  long length = 1024;
  long shift = 16;
  std::string eps = "0.005,0.01,0.02,0.04";
  long deformation_j = 4;
  std::uint64_t seed = 1;
  std::string out = "invariance-out";
  long threads = 1;
  bool deterministic = false;
};

int run_check_invariance(const CheckArgs& a) {
  const std::vector<long> js = parse_scale_range(a.j_range);
  if (js.size() < 2) throw UsageError("--J: need at least two scales for a decay sweep");
  const std::vector<double> eps = parse_double_list(a.eps, "--eps");
  if (eps.size() < 2) throw UsageError("--eps: need at least two warp sizes for a slope");
  for (std::size_t i = 1; i < eps.size(); ++i)
    if (eps[i] <= eps[i - 1]) throw UsageError("--eps: warp sizes must be strictly increasing");
  if (a.signals < 1) throw UsageError("--signals: must be positive");
  const long t = a.length;

  std::vector<FilterBank> banks;
  for (long j : js) banks.push_back(build_filterbank(j, t, 7));
  const FilterBank def_bank = build_filterbank(a.deformation_j, t, 7);

  // Translation decay over J: one probe per seed, distances per scale.
  const long tr_base = std::max<long>(6, 5 * t / 64);
  const long tr_step = std::max<long>(1, 3 * t / 128);
  const long tr_jitter = std::max<long>(1, t / 128);
  const long tr_taper = 3 * t / 8;
  std::vector<std::vector<double>> tr_dist(static_cast<std::size_t>(a.signals),
                                           std::vector<double>(js.size(), 0.0));
  parallel_for(a.signals, a.threads, [&](long s) {
    Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(s)));
    std::vector<long> cycles;
    for (long k = 0; k < 6; ++k)
      cycles.push_back(tr_base + k * tr_step + rng.uniform_int(tr_jitter));
    const Tensor x = bandlimited_probe(rng, t, cycles, tr_taper);
    for (std::size_t ji = 0; ji < js.size(); ++ji)
      tr_dist[static_cast<std::size_t>(s)][ji] = translation_distance(x, a.shift, banks[ji]);
  });
  long monotone = 0;
  double ratio_sum = 0.0;
  long ratio_count = 0;
  for (long s = 0; s < a.signals; ++s) {
    const std::vector<double>& d = tr_dist[static_cast<std::size_t>(s)];
    bool mono = true;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (d[i] >= d[i - 1]) mono = false;
      if (d[i - 1] > 0.0) {
        ratio_sum += d[i] / d[i - 1];
        ++ratio_count;
      }
    }
    if (mono) ++monotone;
  }
  const double mean_ratio =
      ratio_count > 0 ? ratio_sum / static_cast<double>(ratio_count) : std::nan("");
  const bool tr_pass = monotone * 10 >= 9 * a.signals && mean_ratio < 0.75;

  // Deformation linearity: distance vs warp slope on a log-log fit.
  const long df_lo = std::max<long>(2, t / 128);
  const long df_hi = std::max<long>(df_lo + 1, 3 * t / 128);
  std::vector<std::vector<double>> df_dist(static_cast<std::size_t>(a.signals),
                                           std::vector<double>(eps.size(), 0.0));
  std::vector<double> slopes(static_cast<std::size_t>(a.signals), 0.0);
  parallel_for(a.signals, a.threads, [&](long s) {
    Rng rng(derive_seed(a.seed, 1000 + static_cast<std::uint64_t>(s)));
    const Tensor x = bandlimited_probe(rng, t, df_lo, df_hi, 5, t / 8);
    const double phase = 2.0 * 3.14159265358979323846 * rng.uniform();
    std::vector<double> lx, ly;
    for (std::size_t ei = 0; ei < eps.size(); ++ei) {
      const DeformationField field = make_deformation(sinusoidal_warp(t, eps[ei], phase, 4));
      const double d = deformation_distance(x, field, def_bank);
      df_dist[static_cast<std::size_t>(s)][ei] = d;
      lx.push_back(std::log(eps[ei]));
      ly.push_back(std::log(d));
    }
    slopes[static_cast<std::size_t>(s)] = least_squares_slope(lx, ly);
  });
  long in_range = 0;
  for (double sl : slopes)
    if (std::isfinite(sl) && sl >= 0.8 && sl <= 1.2) ++in_range;
  const bool df_pass = in_range * 10 >= 9 * a.signals;
  const bool pass = tr_pass && df_pass;

  const fs::path dir = prepare_out_dir(a.out);
  json report;
  report["schema_version"] = kSchemaVersion;
  report["translation"] = json{{"J", js},
                               {"shift", a.shift},
                               {"length", t},
                               {"signals", a.signals},
                               {"distances", tr_dist},
                               {"monotone", monotone},
                               {"mean_ratio", mean_ratio},
                               {"pass", tr_pass}};
  report["deformation"] = json{{"J", a.deformation_j},
                               {"eps", eps},
                               {"distances", df_dist},
                               {"slopes", slopes},
                               {"in_range", in_range},
                               {"pass", df_pass}};
  report["pass"] = pass;
  write_json_file(dir / "invariance.json", report);

  const json config{{"J", a.j_range},        {"signals", a.signals},
                    {"length", t},           {"shift", a.shift},
                    {"eps", a.eps},          {"deformation_J", a.deformation_j}};
  write_manifest(dir, "check-invariance", config, a.seed, a.threads, a.deterministic, {},
                 {"invariance.json"});

  std::cout << "translation decay over J (shift " << a.shift << ", length " << t << ", "
            << a.signals << " signals)\n";
  std::cout << "   J   mean distance\n";
  for (std::size_t ji = 0; ji < js.size(); ++ji) {
    double mean = 0.0;
    for (long s = 0; s < a.signals; ++s) mean += tr_dist[static_cast<std::size_t>(s)][ji];
    mean /= static_cast<double>(a.signals);
    std::cout << "   " << js[ji] << "   " << fmt_fixed(mean, 6) << "\n";
  }
  std::cout << "monotone " << monotone << "/" << a.signals << ", mean decay ratio "
            << fmt_fixed(mean_ratio, 3) << " -> " << (tr_pass ? "pass" : "FAIL") << "\n";
  std::cout << "deformation linearity at J=" << a.deformation_j << ": slopes in [0.8, 1.2] for "
            << in_range << "/" << a.signals << " -> " << (df_pass ? "pass" : "FAIL") << "\n";
  std::cout << "invariance: " << (pass ? "pass" : "FAIL") << " -> "
            << (dir / "invariance.json").string() << "\n";
  return pass ? 0 : 1;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string lengths = "256,512,1024";
  long d_model = 64;
  long d_attn = 32;
  long scales = 4;
  long layers = 2;
  long t_p = 24;
  long reps = 5;
  std::uint64_t seed = 1;
  std::string out = "bench-out";
  long threads = 1;
  bool deterministic = false;
};

int run_bench(const BenchArgs& a) {
  const std::vector<long> lengths = parse_long_list(a.lengths, "--lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i)
    if (lengths[i] <= lengths[i - 1]) throw UsageError("--lengths: must be strictly increasing");
  if (a.reps < 1) throw UsageError("--reps: must be positive");
  constexpr double kBound = 2.6;

  std::vector<double> medians;
  for (long len : lengths) {
    ModelConfig mc;
    mc.T_s = len;
    mc.T_p = a.t_p;
    mc.C = 1;
    mc.D = a.d_model;
    mc.d = a.d_attn;
    mc.J = a.scales;
    mc.strides = {1, 2, 4};
    mc.num_mrta_layers = a.layers;
    mc.seed = a.seed;
    const Forecaster m = make_forecaster(mc);
    Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(len)));
    const Tensor x = rng.normal_tensor({len, 1});
    (void)forward(m, x, nullptr, a.threads);  // warm pass
    std::vector<double> times;
    for (long rep = 0; rep < a.reps; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)forward(m, x, nullptr, a.threads);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    medians.push_back(times[times.size() / 2]);
  }

  bool all_pass = true;
  std::vector<json> rows;
  std::cout << "  length   median ms     ratio   bound " << kBound << "\n";
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    json row{{"length", lengths[i]}, {"median_ms", medians[i]}};
    std::string ratio_text = "-", pass_text = "-";
    if (i > 0 && lengths[i] == 2 * lengths[i - 1]) {
      const double ratio = medians[i] / medians[i - 1];
      const bool ok = ratio <= kBound;
      all_pass = all_pass && ok;
      row["ratio"] = ratio;
      row["pass"] = ok;
      ratio_text = fmt_fixed(ratio, 3);
      pass_text = ok ? "pass" : "FAIL";
    }
    rows.push_back(std::move(row));
    char line[128];
    std::snprintf(line, sizeof(line), "%8ld   %9.3f   %7s   %s\n", lengths[i], medians[i],
                  ratio_text.c_str(), pass_text.c_str());
    std::cout << line;
  }

  const fs::path dir = prepare_out_dir(a.out);
  {
    const fs::path path = dir / "bench.csv";
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw IoError("cannot write " + path.string());
    outf << "length,median_ms,ratio,pass\n";
    for (const json& row : rows) {
      outf << row["length"].get<long>() << "," << fmt_value(row["median_ms"].get<double>()) << ",";
      if (row.contains("ratio"))
        outf << fmt_value(row["ratio"].get<double>()) << "," << (row["pass"].get<bool>() ? 1 : 0);
      else
        outf << ",";
      outf << "\n";
    }
  }
  json report;
  report["schema_version"] = kSchemaVersion;
  report["bound"] = kBound;
  report["reps"] = a.reps;
  report["rows"] = rows;
  report["pass"] = all_pass;
  write_json_file(dir / "bench.json", report);

  const json config{{"lengths", lengths}, {"d_model", a.d_model}, {"d_attn", a.d_attn},
                    {"scales", a.scales}, {"layers", a.layers},   {"t_p", a.t_p},
                    {"reps", a.reps}};
  write_manifest(dir, "bench", config, a.seed, a.threads, a.deterministic, {},
                 {"bench.csv", "bench.json"});
  std::cout << "bench: " << (all_pass ? "pass" : "FAIL") << " -> " << (dir / "bench.csv").string()
            << "\n";
  return all_pass ? 0 : 1;
}

// ---- dispatch --------------------------------------------------------------

long edit_distance(const std::string& a, const std::string& b) {
  std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void collect_names(const CLI::App* app, std::vector<std::string>& out) {
  for (const CLI::Option* opt : app->get_options()) {
    for (const std::string& n : opt->get_lnames()) out.push_back("--" + n);
    for (const std::string& n : opt->get_snames()) out.push_back("-" + n);
  }
  for (const CLI::App* sub : app->get_subcommands([](const CLI::App*) { return true; })) {
    out.push_back(sub->get_name());
    collect_names(sub, out);
  }
}

std::string suggest_name(const CLI::App& app, const std::string& bad) {
  std::vector<std::string> names;
  collect_names(&app, names);
  std::string best;
  long best_d = std::numeric_limits<long>::max();
  for (const std::string& n : names) {
    const long d = edit_distance(bad, n);
    if (d < best_d) {
      best_d = d;
      best = n;
    }
  }
  return best_d <= 3 ? best : std::string();
}

std::string unexpected_token(const std::string& message) {
  const std::size_t pos = message.rfind(": ");
  if (pos == std::string::npos) return "";
  std::stringstream ss(message.substr(pos + 2));
  std::string tok;
  ss >> tok;
  return tok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"wavelet scattering forecaster"};
  app.name("scatterfusion");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.option_defaults()->always_capture_default();

  int code = 0;

  auto* sc_cmd = app.add_subcommand("scatter", "write scattering coefficients for a CSV series");
  auto sc = std::make_shared<ScatterArgs>();
  sc_cmd->add_option("--data", sc->data, "input CSV (header row required)")->required();
  sc_cmd->add_option("--out", sc->out, "output directory");
  sc_cmd->add_option("--J", sc->J, "number of dyadic scales");
  sc_cmd->add_option("--k-g", sc->k_g, "learnable kernel length (odd)");
  sc_cmd->add_flag("--no-subsample", sc->no_subsample, "keep the full time grid");
  sc_cmd->add_flag("--dump-filters", sc->dump_filters, "also write the filter taps");
  sc_cmd->add_option("--threads", sc->threads, "parallelism cap");
  sc_cmd->add_flag("--deterministic", sc->deterministic, "record the reproducibility contract");
  sc_cmd->callback([sc, &code] { code = run_scatter(*sc); });

  auto* dc_cmd = app.add_subcommand("decompose", "trend/seasonal/residual split of a CSV series");
  auto dc = std::make_shared<DecomposeArgs>();
  dc_cmd->add_option("--data", dc->data, "input CSV")->required();
  dc_cmd->add_option("--out", dc->out, "output directory");
  dc_cmd->add_option("--period", dc->period, "seasonal period (0 = auto-detect)");
  dc_cmd->callback([dc, &code] { code = run_decompose(*dc); });

  auto* tr_cmd = app.add_subcommand("train", "fit a model; writes checkpoint, metrics and log");
  auto tr = std::make_shared<TrainArgs>();
  tr_cmd->add_option("--config", tr->config, "JSON config file (schema_version 1)");
  tr_cmd->add_option("--data", tr->data, "training CSV")->required();
  tr_cmd->add_option("--out", tr->out, "output directory");
  tr_cmd->add_option("--ablate", tr->ablate, "drop a module before training")
      ->check(CLI::IsMember({"hstm", "safe", "mrta", "tsr"}))
      ->delimiter(',');
  tr_cmd->add_option("--t-s", tr->t_s, "input window length");
  tr_cmd->add_option("--t-p", tr->t_p, "forecast horizon");
  tr_cmd->add_option("--t-p-max", tr->t_p_max, "largest horizon the gate is built for");
  tr_cmd->add_option("--d-model", tr->d_model, "model width");
  tr_cmd->add_option("--d-attn", tr->d_attn, "attention width");
  tr_cmd->add_option("--scales", tr->scales, "scattering scales J");
  tr_cmd->add_option("--strides", tr->strides, "attention strides, e.g. 1,2,4");
  tr_cmd->add_option("--mrta-layers", tr->mrta_layers, "attention layers");
  tr_cmd->add_option("--k-g", tr->k_g, "learnable kernel length (odd)");
  tr_cmd->add_option("--epochs", tr->epochs, "training epochs");
  tr_cmd->add_option("--batch-size", tr->batch_size, "windows per step");
  tr_cmd->add_option("--patience", tr->patience, "epochs without val improvement before stopping");
  tr_cmd->add_option("--lr-max", tr->lr_max, "cosine schedule peak");
  tr_cmd->add_option("--lr-min", tr->lr_min, "cosine schedule floor");
  tr_cmd->add_option("--weight-decay", tr->weight_decay, "decoupled weight decay");
  tr_cmd->add_option("--beta1", tr->beta1, "first-moment decay");
  tr_cmd->add_option("--beta2", tr->beta2, "second-moment decay");
  tr_cmd->add_option("--eps", tr->eps, "adam denominator floor");
  tr_cmd->add_option("--clip-norm", tr->clip_norm, "global gradient norm cap");
  tr_cmd->add_option("--lambda-t", tr->lambda_t, "trend loss weight");
  tr_cmd->add_option("--lambda-s", tr->lambda_s, "seasonal loss weight");
  tr_cmd->add_option("--lambda-r", tr->lambda_r, "residual loss weight");
  tr_cmd->add_option("--beta", tr->beta, "decomposition loss weight");
  tr_cmd->add_option("--seed", tr->seed, "seed for init and shuffling");
  tr_cmd->add_option("--threads", tr->threads, "parallelism cap");
  tr_cmd->add_flag("--deterministic", tr->deterministic, "record the reproducibility contract");
  tr_cmd->callback([tr_cmd, tr, &code] { code = run_train(*tr_cmd, *tr); });

  auto* pr_cmd = app.add_subcommand("predict", "forecast from the last (or a chosen) input window");
  auto pr = std::make_shared<PredictArgs>();
  pr_cmd->add_option("--checkpoint", pr->checkpoint, "trained checkpoint")->required();
  pr_cmd->add_option("--data", pr->data, "input CSV")->required();
  pr_cmd->add_option("--out", pr->out, "output directory");
  pr_cmd->add_option("--start", pr->start, "input window start row (default: last window)");
  pr_cmd->add_option("--threads", pr->threads, "parallelism cap");
  pr_cmd->add_flag("--deterministic", pr->deterministic, "record the reproducibility contract");
  pr_cmd->callback([pr_cmd, pr, &code] { code = run_predict(*pr_cmd, *pr); });

  auto* ev_cmd = app.add_subcommand("evaluate", "score a checkpoint against the baselines");
  auto ev = std::make_shared<EvaluateArgs>();
  ev_cmd->add_option("--checkpoint", ev->checkpoint, "trained checkpoint")->required();
  ev_cmd->add_option("--data", ev->data, "input CSV")->required();
  ev_cmd->add_option("--out", ev->out, "output directory");
  ev_cmd->add_option("--split", ev->split_name, "which chronological split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev_cmd->add_option("--horizons", ev->horizons, "horizon prefixes to score, e.g. 12,24");
  ev_cmd->add_option("--stride", ev->stride, "window stride");
  ev_cmd->add_flag("--strict-boundary", ev->strict_boundary,
                   "forbid lookback across the split boundary");
  ev_cmd->add_option("--ablate", ev->ablate, "bypass a trained module at evaluation time")
      ->check(CLI::IsMember({"hstm", "safe", "mrta", "tsr"}))
      ->delimiter(',');
  ev_cmd->add_option("--threads", ev->threads, "parallelism cap");
  ev_cmd->add_flag("--deterministic", ev->deterministic, "record the reproducibility contract");
  ev_cmd->callback([ev, &code] { code = run_evaluate(*ev); });

  auto* ci_cmd = app.add_subcommand("check-invariance",
                                    "measure translation decay and deformation linearity");
  auto ci = std::make_shared<CheckArgs>();
  ci_cmd->add_option("--J", ci->j_range, "scales to sweep, e.g. 3..6");
  ci_cmd->add_option("--signals", ci->signals, "seeded probes per check");
  ci_cmd->add_option("--length", ci->length, "probe length");
  ci_cmd->add_option("--shift", ci->shift, "translation in samples");
  ci_cmd->add_option("--eps", ci->eps, "warp slopes for the linearity fit");
  ci_cmd->add_option("--deformation-J", ci->deformation_j, "bank scale for the deformation check");
  ci_cmd->add_option("--seed", ci->seed, "probe seed");
  ci_cmd->add_option("--out", ci->out, "output directory");
  ci_cmd->add_option("--threads", ci->threads, "parallelism cap");
  ci_cmd->add_flag("--deterministic", ci->deterministic, "record the reproducibility contract");
  ci_cmd->callback([ci, &code] { code = run_check_invariance(*ci); });

  auto* be_cmd = app.add_subcommand("bench", "forward wall time vs the doubling bound");
  auto be = std::make_shared<BenchArgs>();
  be_cmd->add_option("--lengths", be->lengths, "input lengths, e.g. 256,512,1024");
  be_cmd->add_option("--d-model", be->d_model, "model width");
  be_cmd->add_option("--d-attn", be->d_attn, "attention width");
  be_cmd->add_option("--scales", be->scales, "scattering scales J");
  be_cmd->add_option("--layers", be->layers, "attention layers");
  be_cmd->add_option("--t-p", be->t_p, "forecast horizon");
  be_cmd->add_option("--reps", be->reps, "timed repetitions per length");
  be_cmd->add_option("--seed", be->seed, "probe seed");
  be_cmd->add_option("--out", be->out, "output directory");
  be_cmd->add_option("--threads", be->threads, "parallelism cap");
  be_cmd->add_flag("--deterministic", be->deterministic, "record the reproducibility contract");
  be_cmd->callback([be, &code] { code = run_bench(*be); });

  try {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("scatterfusion");
    for (const std::string& arg : args) argv.push_back(arg.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << "\n";
    return 0;
  } catch (const CLI::ExtrasError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    const std::string bad = unexpected_token(e.what());
    if (!bad.empty()) {
      const std::string hint = suggest_name(app, bad);
      if (!hint.empty()) std::cerr << "did you mean '" << hint << "'?\n";
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}

}  // namespace scatterfusion
