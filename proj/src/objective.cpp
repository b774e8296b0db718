#include "pvlr/objective.hpp"

#include <cmath>
#include <vector>

#include "pvlr/errors.hpp"

namespace pvlr {

void LossConfig::validate() const {
  if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0)) throw ConfigError("loss: focusing exponents must be >= 0");
  if (!(lambda_kcr >= 0.0)) throw ConfigError("loss: lambda_kcr must be >= 0");
  if (!(prob_clip_eps > 0.0 && prob_clip_eps < 0.5)) throw ConfigError("loss: prob_clip_eps must lie in (0, 0.5)");
}

Tensor asl_loss(const Tensor& probs, std::span<const double> targets, const LossConfig& config) {
  if (probs.rank() != 1 || probs.numel() != targets.size()) {
    throw DimensionError("asl_loss: probabilities " + shape_to_string(probs.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<double> neg(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (targets[j] != 0.0 && targets[j] != 1.0) {
      throw LabelError("asl_loss: target " + std::to_string(j) + " is " + std::to_string(targets[j]) +
                       ", expected 0 or 1");
    }
    neg[j] = 1.0 - targets[j];
  }
  const Tensor y({targets.size()}, std::vector<double>(targets.begin(), targets.end()));
  const Tensor not_y({targets.size()}, std::move(neg));
  const Tensor one_minus_p = affine(probs, -1.0, 1.0);
  const Tensor pos_term = mul(pow_scalar(one_minus_p, config.gamma_pos), log_clamped(probs, config.prob_clip_eps));
  const Tensor neg_term = mul(pow_scalar(probs, config.gamma_neg), log_clamped(one_minus_p, config.prob_clip_eps));
  return affine(mean(add(mul(y, pos_term), mul(not_y, neg_term))), -1.0);
}

Tensor kcr_loss(const Tensor& t_ka, const Tensor& t_ca) { return mean(affine(cosine_rows(t_ka, t_ca), -1.0, 1.0)); }

Tensor total_loss(const Tensor& cls, const Tensor& kcr, const LossConfig& config) {
  if (cls.numel() != 1 || kcr.numel() != 1) throw ContractError("total_loss: both terms must be scalars");
  if (!std::isfinite(cls.item()) || !std::isfinite(kcr.item())) throw NumericError("total_loss: non-finite term");
  return add(reshape(cls, {}), affine(reshape(kcr, {}), config.lambda_kcr));
}

}  // namespace pvlr
