#include "pvlr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pvlr/errors.hpp"

namespace pvlr {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Parameter> params,
                                  const GradCheckOptions& options) {
  if (!(options.relative_step > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  for (auto& p : params) p.tensor.zero_grad();
  const Tensor loss = loss_fn();
  const double baseline = loss.item();
  if (loss.requires_grad()) loss.backward();
  {
    NoGradGuard no_grad;
    const double again = loss_fn().item();
    if (again != baseline) {
      throw DeterminismError("finite_diff_check: loss function is not deterministic (" + std::to_string(baseline) +
                             " vs " + std::to_string(again) + ")");
    }
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (auto& p : params) {
    ParameterGradError entry;
    entry.name = p.name;
    entry.numel = p.tensor.numel();
    const std::vector<double> analytic = p.tensor.has_grad()
                                             ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                             : std::vector<double>(p.tensor.numel(), 0.0);
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      const double h = options.relative_step * std::max(1.0, std::abs(original));
      auto eval_at = [&](double offset) {
        values[i] = original + offset;
        const double f = loss_fn().item();
        values[i] = original;
        return f;
      };
      const double numeric =
          options.fourth_order
              ? (8.0 * (eval_at(h) - eval_at(-h)) - (eval_at(2.0 * h) - eval_at(-2.0 * h))) / (12.0 * h)
              : (eval_at(h) - eval_at(-h)) / (2.0 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({options.denominator_floor, std::abs(a), std::abs(numeric)});
      if (rel > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace pvlr
