#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pvlr/errors.hpp"
#include "pvlr/optim.hpp"

using namespace pvlr;

namespace {

ParameterSet one_param(std::vector<double> values) {
  ParameterSet ps;
  const std::size_t n = values.size();
  ps.add("w", Tensor({n}, std::move(values), true));
  return ps;
}

void set_grad(ParameterSet& ps, const std::vector<double>& g) {
  ps.zero_grad();
  Tensor& w = ps.get("w");
  sum(mul(w, Tensor(w.shape(), g))).backward();
}

}  // namespace

TEST(AdamW, FirstStepExample) {
  ParameterSet ps = one_param({1.0, -2.0});
  set_grad(ps, {0.5, -4.0});
  AdamState st = AdamState::zeros_like(ps);
  OptimConfig cfg;
  cfg.weight_decay = 0.01;
  adamw_step(ps, st, 0.1, cfg);
  const auto w = ps.get("w").values();
  // bias-corrected first step moves each entry by lr·sign(g)
  EXPECT_NEAR(w[0], 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], -2.0 * (1.0 - 0.1 * 0.01) + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(st.m[0][0], 0.05, 1e-15);
  EXPECT_NEAR(st.v[0][1], 0.001 * 16.0, 1e-15);
}

TEST(AdamW, SecondStepMatchesFormula) {
  ParameterSet ps = one_param({0.3});
  AdamState st = AdamState::zeros_like(ps);
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  set_grad(ps, {1.0});
  adamw_step(ps, st, 0.01, cfg);
  set_grad(ps, {-0.5});
  adamw_step(ps, st, 0.01, cfg);
  const double m = 0.9 * 0.1 + 0.1 * -0.5, v = 0.999 * 0.001 + 0.001 * 0.25;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(ps.get("w").values()[0], 0.3 - 0.01 / (1.0 + 1e-8) - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
}

TEST(AdamW, RequiresGradients) {
  ParameterSet ps = one_param({1.0});
  AdamState st = AdamState::zeros_like(ps);
  EXPECT_THROW(adamw_step(ps, st, 0.1, OptimConfig{}), ContractError);
  AdamState wrong;
  set_grad(ps, {1.0});
  EXPECT_THROW(adamw_step(ps, wrong, 0.1, OptimConfig{}), ContractError);
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
  EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 1e-3, 1e-5), 1e-5);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3, 1e-5), 0.5 * (1e-3 + 1e-5), 1e-18);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0, 0.0), 0.5 * (1.0 + std::cos(std::numbers::pi / 4.0)), 1e-15);
  EXPECT_THROW(cosine_lr(101, 100, 1.0, 0.0), ContractError);
  EXPECT_THROW(cosine_lr(0, 0, 1.0, 0.0), ContractError);
}

TEST(Ema, OneStepFormulaExact) {
  ParameterSet ps = one_param({1.0, 2.0});
  EmaState ema = EmaState::from(ps, 0.9);
  ps.get("w").mutable_values()[0] = 3.0;
  ema_update(ema, ps);
  EXPECT_EQ(ema.shadow[0][0], 0.9 * 1.0 + (1.0 - 0.9) * 3.0);
  EXPECT_EQ(ema.shadow[0][1], 0.9 * 2.0 + (1.0 - 0.9) * 2.0);
  EXPECT_EQ(ps.get("w").values()[0], 3.0);
  ParameterSet other = one_param({1.0});
  EXPECT_THROW(ema_update(ema, other), ContractError);
}

TEST(Ema, DecayEdgeCases) {
  ParameterSet ps = one_param({1.0});
  EmaState frozen = EmaState::from(ps, 1.0), follow = EmaState::from(ps, 0.0);
  ps.get("w").mutable_values()[0] = 5.0;
  ema_update(frozen, ps);
  ema_update(follow, ps);
  EXPECT_EQ(frozen.shadow[0][0], 1.0);
  EXPECT_EQ(follow.shadow[0][0], 5.0);
}
