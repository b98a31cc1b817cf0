#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include "doctest.h"
#include "scatterfusion/checkpoint.hpp"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/gradcheck.hpp"
#include "scatterfusion/model.hpp"
#include "scatterfusion/rng.hpp"
#include "scatterfusion/tsr.hpp"

using namespace scatterfusion;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.T_s = 32;
  cfg.T_p = 8;
  cfg.C = 2;
  cfg.D = 8;
  cfg.d = 4;
  cfg.J = 3;
  cfg.strides = {1, 2};
  cfg.num_mrta_layers = 2;
  cfg.seed = 42;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

std::vector<Tensor> random_param_values(const Forecaster& m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (const auto& [name, value] : parameter_snapshot(m))
    out.push_back(rng.normal_tensor(value.shape, 0.3));
  return out;
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  CHECK_NOTHROW(validate_config(tiny_config()));

  ModelConfig cfg = tiny_config();
  cfg.J = 1;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.T_s = 31;  // below 2^3 * 4
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.T_p = 721;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.K_g = 6;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.strides = {2, 2};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.strides = {};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = tiny_config();
  cfg.num_mrta_layers = 0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("scale groups and scatter grid have the expected sizes") {
  CHECK(group_width(4, 1) == 5);
  CHECK(group_width(4, 2) == 4);
  CHECK(group_width(4, 3) == 3);
  CHECK(group_width(4, 4) == 2);
  CHECK(scatter_length(96, 4) == 12);
  CHECK(scatter_length(32, 3) == 8);
  CHECK(scatter_length(33, 3) == 9);
}

TEST_CASE("window normalization round-trips and guards constant channels") {
  Rng rng(7);
  const Tensor x = rng.normal_tensor({24, 3}, 4.0);
  const NormStats s = window_stats(x);
  const Tensor xn = normalize_window(x, s);
  CHECK(max_abs_diff(denormalize_window(xn, s), x) < 1e-12);
  for (long c = 0; c < 3; ++c) {
    double mu = 0.0;
    for (long t = 0; t < 24; ++t) mu += xn.at(t, c);
    CHECK(std::abs(mu / 24.0) < 1e-12);
  }

  const Tensor flat = Tensor::full({10, 1}, 3.25);
  const NormStats fs = window_stats(flat);
  CHECK(fs.sigma.at(0, 0) == 1.0);
  const Tensor fn = normalize_window(flat, fs);
  for (double v : fn.data) CHECK(v == 0.0);
  CHECK(max_abs_diff(denormalize_window(fn, fs), flat) == 0.0);
}

TEST_CASE("embedding is the linear projection plus the positional code") {
  ModelConfig cfg = tiny_config();
  cfg.C = 7;
  cfg.T_s = 96;
  cfg.D = 16;
  const Forecaster m = make_forecaster(cfg);

  // Zero input with the zero-initialized bias leaves only the position code.
  const Tensor e0 = embed(m, Tensor::zeros({96, 7}));
  CHECK(e0.rows() == 96);
  CHECK(e0.cols() == 16);
  CHECK(max_abs_diff(e0, m.pos_enc) == 0.0);

  Rng rng(5);
  const Tensor x = rng.normal_tensor({96, 7});
  const Tensor y = rng.normal_tensor({96, 7});
  Tensor xy = x;
  for (std::size_t i = 0; i < xy.data.size(); ++i) xy.data[i] += y.data[i];
  const Tensor ex = embed(m, x);
  const Tensor ey = embed(m, y);
  const Tensor exy = embed(m, xy);
  double worst = 0.0;
  for (std::size_t i = 0; i < exy.data.size(); ++i)
    worst = std::max(worst, std::abs(ex.data[i] + ey.data[i] - e0.data[i] - exy.data[i]));
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(embed(m, Tensor::zeros({95, 7})), DimensionError);
}

TEST_CASE("forward emits the configured horizon for every standard length") {
  Rng rng(21);
  for (long t_p : {96L, 192L, 336L, 720L}) {
    ModelConfig cfg;
    cfg.T_s = 64;
    cfg.T_p = t_p;
    cfg.C = 2;
    cfg.D = 8;
    cfg.d = 4;
    cfg.J = 3;
    cfg.strides = {1, 2};
    cfg.num_mrta_layers = 1;
    cfg.seed = 3;
    const Forecaster m = make_forecaster(cfg);
    const Tensor x = rng.normal_tensor({64, 2});
    const Tensor y = forward(m, x);
    CHECK(y.rows() == t_p);
    CHECK(y.cols() == 2);
    CHECK(y.all_finite());
  }
}

TEST_CASE("forward rejects bad windows") {
  const Forecaster m = make_forecaster(tiny_config());
  Rng rng(9);
  CHECK_THROWS_AS(forward(m, rng.normal_tensor({31, 2})), DimensionError);
  CHECK_THROWS_AS(forward(m, rng.normal_tensor({32, 1})), DimensionError);
  Tensor bad = rng.normal_tensor({32, 2});
  bad.data[17] = std::nan("");
  CHECK_THROWS_AS(forward(m, bad), DataError);
}

TEST_CASE("same seed gives the same model and the same forecast") {
  const ModelConfig cfg = tiny_config();
  const Forecaster a = make_forecaster(cfg);
  const Forecaster b = make_forecaster(cfg);
  const auto sa = parameter_snapshot(a);
  const auto sb = parameter_snapshot(b);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(max_abs_diff(sa[i].second, sb[i].second) == 0.0);
  }

  Rng rng(33);
  const Tensor x = rng.normal_tensor({32, 2});
  CHECK(max_abs_diff(forward(a, x), forward(b, x)) == 0.0);
  CHECK(max_abs_diff(forward(a, x), forward(a, x)) == 0.0);
  CHECK(max_abs_diff(forward(a, x, nullptr, 1), forward(a, x, nullptr, 4)) == 0.0);
}

TEST_CASE("forward trace carries normalized attention everywhere") {
  const Forecaster m = make_forecaster(tiny_config());
  Rng rng(11);
  const Tensor x = rng.normal_tensor({32, 2});
  ForwardTrace trace;
  forward(m, x, &trace);

  double alpha_sum = 0.0;
  for (double v : trace.alpha.data) {
    CHECK(v > 0.0);
    alpha_sum += v;
  }
  CHECK(std::abs(alpha_sum - 1.0) <= 1e-12);

  REQUIRE(trace.attention.size() == 2);
  for (const auto& layer : trace.attention)
    for (const Tensor& a : layer)
      for (long r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (long c = 0; c < a.cols(); ++c) s += a.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
  for (const Tensor& w : trace.combine) {
    double s = 0.0;
    for (double v : w.data) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("tape forward matches the plain forward") {
  Forecaster m = make_forecaster(tiny_config());
  set_parameters(m, random_param_values(m, 99));
  Rng rng(13);
  const Tensor x = rng.normal_tensor({32, 2});

  Tape tape;
  const TapeForward tf = forward_tape(tape, m, x);

  // Leaves must mirror the registry bitwise and in order.
  const auto snap = parameter_snapshot(m);
  REQUIRE(tf.params.size() == snap.size());
  for (std::size_t i = 0; i < snap.size(); ++i)
    CHECK(max_abs_diff(tape.value(tf.params[i]), snap[i].second) == 0.0);

  const Tensor y_plain = forward(m, x);
  const Tensor y_tape = denormalize_window(tape.value(tf.y_norm), tf.stats);
  CHECK(max_abs_diff(y_tape, y_plain) < 1e-12);
}

TEST_CASE("ablations never add parameters") {
  const ModelConfig full = tiny_config();
  const long base = parameter_count(make_forecaster(full));

  ModelConfig cfg = full;
  cfg.use_hstm = false;
  CHECK(parameter_count(make_forecaster(cfg)) == base - full.J * full.K_g);

  cfg = full;
  cfg.use_safe = false;
  CHECK(parameter_count(make_forecaster(cfg)) == base - 3 * full.D);

  cfg = full;
  cfg.use_mrta = false;
  const Forecaster single = make_forecaster(cfg);
  CHECK(single.mrta[0].strides == std::vector<long>{1});
  CHECK(parameter_count(single) < base);

  cfg = full;
  cfg.use_tsr_loss = false;
  CHECK(parameter_count(make_forecaster(cfg)) == base);

  // Every ablated model still runs end to end, on both execution paths.
  Rng rng(17);
  const Tensor x = rng.normal_tensor({32, 2});
  for (int flag = 0; flag < 4; ++flag) {
    ModelConfig ab = full;
    if (flag == 0) ab.use_hstm = false;
    if (flag == 1) ab.use_safe = false;
    if (flag == 2) ab.use_mrta = false;
    if (flag == 3) ab.use_tsr_loss = false;
    const Forecaster m = make_forecaster(ab);
    const Tensor y = forward(m, x);
    CHECK(y.rows() == full.T_p);
    CHECK(y.cols() == full.C);

    Tape tape;
    const TapeForward tf = forward_tape(tape, m, x);
    CHECK(tf.params.size() == parameter_snapshot(m).size());
    const Tensor y_tape = denormalize_window(tape.value(tf.y_norm), tf.stats);
    CHECK(max_abs_diff(y_tape, y) < 1e-12);
  }
}

TEST_CASE("end-to-end gradient matches finite differences") {
  ModelConfig cfg;
  cfg.T_s = 16;
  cfg.T_p = 4;
  cfg.C = 1;
  cfg.D = 4;
  cfg.d = 3;
  cfg.J = 2;
  cfg.strides = {1, 2};
  cfg.num_mrta_layers = 1;
  cfg.seed = 8;
  const Forecaster base = make_forecaster(cfg);

  Rng rng(55);
  const Tensor x = rng.normal_tensor({16, 1});
  const Tensor y_raw = rng.normal_tensor({4, 1});
  const NormStats stats = window_stats(x);
  const Tensor y_norm = normalize_window(y_raw, stats);
  const LossWeights w;
  const long period = 2;

  // Nudge every parameter off its init so no block sits at a symmetric point.
  std::vector<Tensor> start;
  for (const auto& [name, value] : parameter_snapshot(base)) {
    Tensor t = value;
    const Tensor n = rng.normal_tensor(t.shape, 0.05);
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += n.data[i];
    start.push_back(std::move(t));
  }

  auto run = [&](const std::vector<Tensor>& vars) {
    Forecaster m = base;
    set_parameters(m, vars);
    Tape t;
    const TapeForward tf = forward_tape(t, m, x);
    const Var target = t.constant(y_norm);
    const Var loss = final_loss_tape(t, target, tf.y_norm, w, period);
    return std::pair<Tape, Var>(std::move(t), loss);
  };

  auto [t2, loss] = run(start);
  t2.backward(loss);
  Forecaster probe = base;
  set_parameters(probe, start);
  std::vector<Tensor> analytic;
  {
    Tape t3;
    const TapeForward tf = forward_tape(t3, probe, x);
    const Var target = t3.constant(y_norm);
    const Var l3 = final_loss_tape(t3, target, tf.y_norm, w, period);
    t3.backward(l3);
    for (Var v : tf.params) analytic.push_back(t3.grad(v));
  }

  auto fval = [&](const std::vector<Tensor>& vars) {
    auto [t4, l4] = run(vars);
    return t4.value(l4).data[0];
  };
  const GradCheckResult res = finite_diff_check(fval, start, analytic, 1e-5);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round-trip preserves the forecast bitwise") {
  Forecaster m = make_forecaster(tiny_config());
  set_parameters(m, random_param_values(m, 271));
  Rng rng(19);
  const Tensor x = rng.normal_tensor({32, 2});
  const Tensor y_before = forward(m, x);

  const Checkpoint ck = snapshot(m, 137, 12);
  const std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 137);
  CHECK(back.period == 12);
  CHECK(config_diff(back.config, m.cfg).empty());
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params[i].first == ck.params[i].first);
    CHECK(max_abs_diff(back.params[i].second, ck.params[i].second) == 0.0);
  }

  const Forecaster restored = restore(back);
  CHECK(max_abs_diff(forward(restored, x), y_before) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading fails loudly on mismatch or damage") {
  Forecaster m = make_forecaster(tiny_config());
  const Checkpoint ck = snapshot(m, 5, 0);
  const std::string path = "ckpt_damage_test.bin";
  save_checkpoint(ck, path);

  SUBCASE("config mismatch names the differing keys and leaves the model alone") {
    ModelConfig other = tiny_config();
    other.D = 16;
    other.seed = 7;
    Forecaster victim = make_forecaster(other);
    const auto before = parameter_snapshot(victim);
    try {
      load_into(victim, ck);
      FAIL("expected a config mismatch error");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("d_model") != std::string::npos);
      CHECK(msg.find("seed") != std::string::npos);
    }
    const auto after = parameter_snapshot(victim);
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(max_abs_diff(before[i].second, after[i].second) == 0.0);
  }

  SUBCASE("truncated file is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string blob = ss.str();
    blob.resize(blob.size() - 64);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << blob;
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  SUBCASE("unsupported version is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string blob = ss.str();
    blob[blob.find("v1 ") + 1] = '9';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << blob;
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  SUBCASE("garbage is rejected") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a checkpoint at all";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  std::remove(path.c_str());
}

TEST_CASE("config json survives a round trip and diffs field by field") {
  ModelConfig cfg = tiny_config();
  cfg.strides = {1, 3, 9};
  cfg.use_safe = false;
  cfg.seed = 123456789012345ULL;
  const ModelConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_diff(cfg, back).empty());

  nlohmann::json j = config_to_json(cfg);
  j.erase("d_attn");
  CHECK_THROWS_AS(config_from_json(j), ConfigError);

  ModelConfig other = cfg;
  other.T_p = 9;
  other.use_safe = true;
  const std::vector<std::string> diff = config_diff(cfg, other);
  CHECK(diff == std::vector<std::string>{"t_p", "use_safe"});
}
