#pragma once

#include <cstddef>
#include <vector>

#include "pvlr/config.hpp"
#include "pvlr/tensor.hpp"

namespace pvlr {

/// First and second moments per parameter, in ParameterSet order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamState zeros_like(const ParameterSet& params);
};

/// θ ← θ − lr·wd·θ, then the bias-corrected Adam update with the current
/// gradients. Throws ContractError when a parameter has no gradient.
void adamw_step(ParameterSet& params, AdamState& state, double lr, const OptimConfig& config);

/// lr_min + ½(lr_max − lr_min)(1 + cos(π·step/total)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

struct EmaState {
  std::vector<std::vector<double>> shadow;
  double decay = 0.9997;

  static EmaState from(const ParameterSet& params, double decay);
};

/// shadow ← β·shadow + (1−β)·θ. Throws ContractError on shape drift.
void ema_update(EmaState& ema, const ParameterSet& params);

}  // namespace pvlr
