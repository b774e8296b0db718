#pragma once

#include <span>

#include "pvlr/tensor.hpp"

namespace pvlr {

struct LossConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 2.0;
  double lambda_kcr = 4.0;
  double prob_clip_eps = 1e-8;

  void validate() const;
};

/// Asymmetric focusing loss, averaged over labels and sign-flipped so that
/// it is a nonnegative minimization target:
///   -(1/C) Σ_j [ y_j (1-p_j)^γ⁺ log p_j + (1-y_j) p_j^γ⁻ log(1-p_j) ]
/// Throws LabelError if any target is not exactly 0 or 1.
Tensor asl_loss(const Tensor& probs, std::span<const double> targets, const LossConfig& config);

/// (1/C) Σ_j (1 - cos(t_ka[j], t_ca[j])), in [0, 2].
Tensor kcr_loss(const Tensor& t_ka, const Tensor& t_ca);

/// cls + λ · kcr
Tensor total_loss(const Tensor& cls, const Tensor& kcr, const LossConfig& config);

}  // namespace pvlr
