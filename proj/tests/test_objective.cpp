#include <gtest/gtest.h>

#include <cmath>

#include "pvlr/errors.hpp"
#include "pvlr/objective.hpp"
#include "test_util.hpp"

using namespace pvlr;
using pvlr::testing::max_fd_error;
using pvlr::testing::random_tensor;

TEST(Asl, NegativeExample) {
  LossConfig cfg;
  cfg.gamma_pos = 0.0;
  cfg.gamma_neg = 2.0;
  const std::vector<double> y = {0.0};
  const double l = asl_loss(Tensor({1}, {0.5}), y, cfg).item();
  EXPECT_NEAR(l, 0.25 * std::log(2.0), 1e-15);
}

TEST(Asl, ZeroFocusingIsMeanBce) {
  LossConfig cfg;
  cfg.gamma_pos = 0.0;
  cfg.gamma_neg = 0.0;
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + rng.index(6);
    std::vector<double> p(c), y(c);
    double bce = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = rng.uniform(1e-3, 1.0 - 1e-3);
      y[j] = rng.uniform(0.0, 1.0) < 0.5 ? 1.0 : 0.0;
      bce -= y[j] * std::log(p[j]) + (1.0 - y[j]) * std::log(1.0 - p[j]);
    }
    EXPECT_NEAR(asl_loss(Tensor({c}, p), y, cfg).item(), bce / static_cast<double>(c), 1e-12);
  }
}

TEST(Asl, ClippingKeepsLossFinite) {
  LossConfig cfg;
  const std::vector<double> y = {1.0, 0.0};
  const double l = asl_loss(Tensor({2}, {0.0, 1.0}), y, cfg).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -0.5 * (std::log(1e-8) + std::log(1e-8)), 1e-9);
}

TEST(Asl, RejectsBadTargetsAndShapes) {
  LossConfig cfg;
  const std::vector<double> half = {0.5};
  EXPECT_THROW(asl_loss(Tensor({1}, {0.3}), half, cfg), LabelError);
  const std::vector<double> two = {1.0, 0.0};
  EXPECT_THROW(asl_loss(Tensor({1}, {0.3}), two, cfg), DimensionError);
  cfg.gamma_neg = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Asl, GradientMatchesFiniteDifferences) {
  LossConfig cfg;
  cfg.gamma_pos = 1.0;
  cfg.gamma_neg = 2.0;
  Rng rng(2);
  Tensor logits = random_tensor({5}, rng, 1.0, true);
  const std::vector<double> y = {1, 0, 0, 1, 0};
  EXPECT_LT(max_fd_error([&] { return asl_loss(sigmoid(logits), y, cfg); }, {logits}), 1e-6);
}

TEST(Kcr, RangeAndParallelRows) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + rng.index(5), d = 1 + rng.index(6);
    const Tensor a = random_tensor({c, d}, rng), b = random_tensor({c, d}, rng);
    const double k = kcr_loss(a, b).item();
    EXPECT_GE(k, 0.0);
    EXPECT_LE(k, 2.0);
    std::vector<double> scaled(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < d; ++j) scaled[i * d + j] *= 0.5 + static_cast<double>(i);
    EXPECT_NEAR(kcr_loss(a, Tensor({c, d}, scaled)).item(), 0.0, 1e-9);
    EXPECT_NEAR(kcr_loss(a, affine(a, -1.0)).item(), 2.0, 1e-9);
  }
}

TEST(Kcr, NonParallelIsPositive) {
  const Tensor a({2, 2}, {1, 0, 0, 1}), b({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(kcr_loss(a, b).item(), 0.5, 1e-15);
}

TEST(Kcr, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor a = random_tensor({3, 4}, rng, 1.0, true), b = random_tensor({3, 4}, rng, 1.0, true);
  EXPECT_LT(max_fd_error([&] { return kcr_loss(a, b); }, {a, b}), 1e-6);
}

TEST(TotalLoss, WeightsConsistencyTerm) {
  LossConfig cfg;
  cfg.lambda_kcr = 4.0;
  EXPECT_DOUBLE_EQ(total_loss(Tensor::scalar(0.5), Tensor::scalar(0.25), cfg).item(), 1.5);
  EXPECT_THROW(total_loss(Tensor::scalar(std::nan("")), Tensor::scalar(0.0), cfg), NumericError);
  EXPECT_THROW(total_loss(Tensor({2}, {1, 2}), Tensor::scalar(0.0), cfg), ContractError);
}
