#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "pvlr/gradcheck.hpp"
#include "pvlr/random.hpp"
#include "pvlr/tensor.hpp"

namespace pvlr::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0, bool requires_grad = false) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), rng.normal_vector(n, 0.0, sd), requires_grad);
}

inline Tensor random_leaf(Shape shape, Rng& rng, double sd = 1.0) { return random_tensor(std::move(shape), rng, sd, true); }

/// Weighted sum of all entries, so every output entry gets a distinct upstream gradient.
inline Tensor probe_loss(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  const Tensor w(out.shape(), rng.normal_vector(out.numel(), 0.0, 1.0));
  return sum(mul(out, w));
}

inline double max_fd_error(const std::function<Tensor()>& loss_fn, std::vector<Tensor> leaves) {
  std::vector<Parameter> params;
  for (std::size_t i = 0; i < leaves.size(); ++i) params.push_back({"p" + std::to_string(i), leaves[i]});
  return finite_diff_check(loss_fn, params).max_rel_error();
}

inline void expect_row_stochastic(const Tensor& m, double tol) {
  ASSERT_EQ(m.rank(), 2u);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      EXPECT_GE(m.at(i, j), 0.0);
      s += m.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, tol);
  }
}

}  // namespace pvlr::testing
