#include "pvlr/optim.hpp"

#include <cmath>
#include <numbers>

#include "pvlr/errors.hpp"

namespace pvlr {

AdamState AdamState::zeros_like(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params.items()) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(ParameterSet& params, AdamState& state, double lr, const OptimConfig& config) {
  auto& items = params.items();
  if (state.m.size() != items.size() || state.v.size() != items.size()) {
    throw ContractError("adamw_step: optimizer state does not match the parameter set");
  }
  for (const auto& p : items) {
    if (!p.tensor.has_grad()) throw ContractError("adamw_step: parameter '" + p.name + "' has no gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - lr * config.weight_decay;
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto theta = items[k].tensor.mutable_values();
    const auto g = items[k].tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != theta.size() || v.size() != theta.size()) {
      throw ContractError("adamw_step: moment size drift for '" + items[k].name + "'");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] *= decay;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0 || step > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) +
                        "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

EmaState EmaState::from(const ParameterSet& params, double decay) {
  EmaState e;
  e.decay = decay;
  for (const auto& p : params.items()) {
    const auto v = p.tensor.values();
    e.shadow.emplace_back(v.begin(), v.end());
  }
  return e;
}

void ema_update(EmaState& ema, const ParameterSet& params) {
  const auto& items = params.items();
  if (ema.shadow.size() != items.size()) throw ContractError("ema_update: parameter count drift");
  const double b = ema.decay;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto theta = items[k].tensor.values();
    auto& s = ema.shadow[k];
    if (s.size() != theta.size()) throw ContractError("ema_update: shape drift for '" + items[k].name + "'");
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = b * s[i] + (1.0 - b) * theta[i];
  }
}

}  // namespace pvlr
