#include <cmath>

#include "doctest.h"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/gradcheck.hpp"
#include "scatterfusion/rng.hpp"
#include "scatterfusion/safe.hpp"

using namespace scatterfusion;

namespace {

ScaleFeatures random_features(Rng& rng, long js, long t_len, long d) {
  ScaleFeatures f;
  for (long j = 0; j < js; ++j) f.H.push_back(rng.normal_tensor({t_len, d}));
  return f;
}

}  // namespace

TEST_CASE("context vectors are temporal means") {
  Tensor alt = Tensor::zeros({2, 3});
  for (long c = 0; c < 3; ++c) {
    alt.at(0, c) = 7.5;
    alt.at(1, c) = -7.5;
  }

  // Scale maps must agree in shape.
  ScaleFeatures mismatched;
  mismatched.H.push_back(Tensor::full({5, 3}, 2.0));
  mismatched.H.push_back(alt);
  CHECK_THROWS_AS(context_vectors(mismatched), DimensionError);

  ScaleFeatures constant;
  constant.H.push_back(Tensor::full({5, 3}, 2.0));
  for (double v : context_vectors(constant).data) CHECK(v == 2.0);

  ScaleFeatures sym;
  sym.H.push_back(alt);
  for (double v : context_vectors(sym).data) CHECK(v == 0.0);

  Rng rng(91);
  ScaleFeatures rnd = random_features(rng, 3, 11, 4);
  const Tensor got = context_vectors(rnd);
  for (long j = 0; j < 3; ++j)
    for (long c = 0; c < 4; ++c) {
      double s = 0.0;
      for (long t = 0; t < 11; ++t) s += rnd.H[static_cast<std::size_t>(j)].at(t, c);
      CHECK(std::fabs(got.at(j, c) - s / 11.0) < 1e-12);
    }

  ScaleFeatures empty;
  CHECK_THROWS_AS(context_vectors(empty), ContractError);
}

TEST_CASE("scale attention is a softmax over scales") {
  Rng rng(92);
  const Tensor w = rng.normal_tensor({1, 4});

  Tensor same = Tensor::zeros({3, 4});
  for (long j = 0; j < 3; ++j)
    for (long c = 0; c < 4; ++c) same.at(j, c) = 0.3 * static_cast<double>(c) - 1.0;
  const Tensor a_same = scale_attention(same, w);
  for (double v : a_same.data) CHECK(std::fabs(v - 1.0 / 3.0) < 1e-12);

  const Tensor one = scale_attention(rng.normal_tensor({1, 4}), w);
  REQUIRE(one.numel() == 1);
  CHECK(one.data[0] == 1.0);

  const Tensor h = rng.normal_tensor({5, 4});
  const Tensor a_zero_w = scale_attention(h, Tensor::zeros({1, 4}));
  for (double v : a_zero_w.data) CHECK(std::fabs(v - 0.2) < 1e-12);

  const Tensor a = scale_attention(h, w);
  double sum = 0.0;
  for (double v : a.data) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(std::fabs(sum - 1.0) <= 1e-12);

  // Adding one constant vector to every h_j shifts all logits equally.
  Tensor shifted = h;
  const Tensor c = rng.normal_tensor({1, 4});
  for (long j = 0; j < 5; ++j)
    for (long d = 0; d < 4; ++d) shifted.at(j, d) += c.at(0, d);
  const Tensor a_shift = scale_attention(shifted, w);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::fabs(a_shift.data[i] - a.data[i]) < 1e-12);
}

TEST_CASE("horizon gate saturates and validates its range") {
  SafeParams p;
  p.w_alpha = Tensor::zeros({1, 3});
  p.w_gamma = Tensor::zeros({1, 3});
  p.b_gamma = Tensor::zeros({1, 3});
  const Tensor mid = horizon_gate(10, p, 100);
  for (double v : mid.data) CHECK(v == 0.5);

  SafeParams hi = p;
  hi.b_gamma = Tensor::full({1, 3}, 30.0);
  for (double v : horizon_gate(10, hi, 100).data) CHECK(v > 1.0 - 1e-12);
  SafeParams lo = p;
  lo.b_gamma = Tensor::full({1, 3}, -30.0);
  for (double v : horizon_gate(10, lo, 100).data) CHECK(v < 1e-12);

  // Monotone in b_gamma.
  SafeParams a = p, b = p;
  a.b_gamma = Tensor::full({1, 3}, 0.2);
  b.b_gamma = Tensor::full({1, 3}, 0.7);
  const Tensor ga = horizon_gate(50, a, 100);
  const Tensor gb = horizon_gate(50, b, 100);
  for (std::size_t i = 0; i < ga.data.size(); ++i) CHECK(gb.data[i] > ga.data[i]);

  for (double v : mid.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(horizon_gate(0, p, 100), ContractError);
  CHECK_THROWS_AS(horizon_gate(101, p, 100), ContractError);
  CHECK_THROWS_AS(horizon_gate(5, p, 0), ContractError);
}

TEST_CASE("enhance weights scales and applies the gate") {
  Rng rng(93);

  ScaleFeatures single = random_features(rng, 1, 6, 3);
  const Tensor alpha1 = Tensor::full({1, 1}, 1.0);
  const Tensor gamma1 = Tensor::full({1, 3}, 1.0);
  const Tensor out1 = enhance(single, alpha1, gamma1);
  for (std::size_t i = 0; i < out1.data.size(); ++i)
    CHECK(out1.data[i] == single.H[0].data[i]);

  ScaleFeatures f = random_features(rng, 4, 6, 3);
  Tensor onehot = Tensor::zeros({4, 1});
  onehot.data[2] = 1.0;
  const Tensor gamma = rng.uniform_tensor({1, 3});
  const Tensor picked = enhance(f, onehot, gamma);
  for (long t = 0; t < 6; ++t)
    for (long c = 0; c < 3; ++c)
      CHECK(std::fabs(picked.at(t, c) - f.H[2].at(t, c) * gamma.at(0, c)) < 1e-15);

  const Tensor alpha = scale_attention(context_vectors(f), rng.normal_tensor({1, 3}));
  const Tensor got = enhance(f, alpha, gamma);
  for (long t = 0; t < 6; ++t)
    for (long c = 0; c < 3; ++c) {
      double s = 0.0;
      for (long j = 0; j < 4; ++j)
        s += alpha.data[static_cast<std::size_t>(j)] * f.H[static_cast<std::size_t>(j)].at(t, c);
      CHECK(std::fabs(got.at(t, c) - s * gamma.at(0, c)) < 1e-12);
    }

  CHECK_THROWS_AS(enhance(f, Tensor::zeros({3, 1}), gamma), DimensionError);
  CHECK_THROWS_AS(enhance(f, onehot, Tensor::zeros({1, 4})), DimensionError);
}

TEST_CASE("enhance is linear in the feature maps") {
  Rng rng(94);
  ScaleFeatures f = random_features(rng, 3, 5, 2);
  ScaleFeatures g = random_features(rng, 3, 5, 2);
  ScaleFeatures sum;
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor s = f.H[j];
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] += 2.0 * g.H[j].data[i];
    sum.H.push_back(s);
  }
  Tensor alpha = rng.uniform_tensor({3, 1});
  double z = alpha.data[0] + alpha.data[1] + alpha.data[2];
  for (double& v : alpha.data) v /= z;
  const Tensor gamma = rng.uniform_tensor({1, 2});
  const Tensor lhs = enhance(sum, alpha, gamma);
  const Tensor a = enhance(f, alpha, gamma);
  const Tensor b = enhance(g, alpha, gamma);
  for (std::size_t i = 0; i < lhs.data.size(); ++i)
    CHECK(std::fabs(lhs.data[i] - (a.data[i] + 2.0 * b.data[i])) < 1e-12);
}

TEST_CASE("tape versions match the plain block and are differentiable") {
  Rng rng(95);
  const long js = 3, t_len = 7, d = 4;
  ScaleFeatures f = random_features(rng, js, t_len, d);
  SafeParams p;
  p.w_alpha = rng.normal_tensor({1, d});
  p.w_gamma = rng.normal_tensor({1, d});
  p.b_gamma = rng.normal_tensor({1, d});

  const Tensor h = context_vectors(f);
  const Tensor alpha = scale_attention(h, p.w_alpha);
  const Tensor gamma = horizon_gate(24, p, 720);
  const Tensor out = enhance(f, alpha, gamma);

  Tape tape;
  std::vector<Var> hv;
  for (const auto& m : f.H) hv.push_back(tape.leaf(m));
  const Var wa = tape.leaf(p.w_alpha);
  const Var wg = tape.leaf(p.w_gamma);
  const Var bg = tape.leaf(p.b_gamma);
  const Var hvar = context_vectors_tape(tape, hv);
  const Var avar = scale_attention_tape(tape, hvar, wa);
  const Var gvar = horizon_gate_tape(tape, wg, bg, 24, 720);
  const Var evar = enhance_tape(tape, hv, avar, gvar);

  for (std::size_t i = 0; i < h.data.size(); ++i)
    CHECK(std::fabs(tape.value(hvar).data[i] - h.data[i]) < 1e-14);
  for (std::size_t i = 0; i < alpha.data.size(); ++i)
    CHECK(std::fabs(tape.value(avar).data[i] - alpha.data[i]) < 1e-14);
  for (std::size_t i = 0; i < gamma.data.size(); ++i)
    CHECK(std::fabs(tape.value(gvar).data[i] - gamma.data[i]) < 1e-14);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    CHECK(std::fabs(tape.value(evar).data[i] - out.data[i]) < 1e-14);

  CHECK_THROWS_AS(horizon_gate_tape(tape, wg, bg, 0, 720), ContractError);

  // Joint gradient of a scalar readout in all parameters and inputs.
  const Tensor probe = rng.normal_tensor({t_len, d});
  auto run = [&](const std::vector<Tensor>& vars) {
    Tape t;
    std::vector<Var> hs;
    for (long j = 0; j < js; ++j) hs.push_back(t.leaf(vars[static_cast<std::size_t>(j)]));
    const Var a_w = t.leaf(vars[static_cast<std::size_t>(js)]);
    const Var g_w = t.leaf(vars[static_cast<std::size_t>(js) + 1]);
    const Var g_b = t.leaf(vars[static_cast<std::size_t>(js) + 2]);
    const Var hh = context_vectors_tape(t, hs);
    const Var aa = scale_attention_tape(t, hh, a_w);
    const Var gg = horizon_gate_tape(t, g_w, g_b, 24, 720);
    const Var ee = enhance_tape(t, hs, aa, gg);
    const Var loss = t.sum_all(t.mul(ee, t.constant(probe)));
    return std::pair<Tape, Var>(std::move(t), loss);
  };

  std::vector<Tensor> params = f.H;
  params.push_back(p.w_alpha);
  params.push_back(p.w_gamma);
  params.push_back(p.b_gamma);

  auto [t2, loss] = run(params);
  t2.backward(loss);
  std::vector<Var> leafs;
  for (std::size_t i = 0; i < params.size(); ++i) leafs.push_back(Var{static_cast<long>(i)});
  std::vector<Tensor> analytic;
  for (Var v : leafs) analytic.push_back(t2.grad(v));

  auto fval = [&](const std::vector<Tensor>& vars) {
    auto [t3, l3] = run(vars);
    return t3.value(l3).data[0];
  };
  CHECK(finite_diff_check(fval, params, analytic, 1e-6).max_rel_error < 1e-6);
}
