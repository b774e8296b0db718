#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pvlr/tensor.hpp"

namespace pvlr {

struct GradCheckOptions {
  /// Step is relative_step · max(1, |θ_i|).
  double relative_step = 1e-5;
  double denominator_floor = 1e-8;
  /// Five-point stencil instead of the two-point central difference.
  bool fourth_order = false;
};

struct ParameterGradError {
  std::string name;
  std::size_t numel = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

/// Central-difference check of autodiff gradients of the scalar `loss_fn`
/// with respect to every entry of every parameter. Relative error is
/// |a - g| / max(floor, |a|, |g|). Throws DeterminismError if two baseline
/// evaluations of `loss_fn` disagree.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Parameter> params,
                                  const GradCheckOptions& options = {});

}  // namespace pvlr
