#pragma once

// Ablation grids and the λ sweep. Every variant of one seed shares the same
// dataset and training seed, so comparisons between variants are paired.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvlr/config.hpp"
#include "pvlr/gradcheck.hpp"
#include "pvlr/metrics.hpp"

namespace pvlr {

struct Variant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

/// Group names: ladder (module ladder), centers (category-center modes),
/// directions (dual-modal directions), routes (implicit/explicit visual
/// routes), kcr_interaction (consistency loss and channel interaction),
/// prompting (pre/post). "all" concatenates every group, dropping repeats.
std::vector<std::string> ablation_groups();
std::vector<Variant> ablation_variants(const std::string& group);

struct RunResult {
  std::string variant;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  MetricsReport report;
  double seconds_per_batch = 0.0;
  double train_seconds = 0.0;
  std::string error;  ///< non-empty when the cell failed
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  /// Cap on optimizer steps per run; 0 means the full schedule (for timing).
  std::size_t max_steps = 0;
  std::ostream* progress = nullptr;
};

/// Trains one configuration and returns its final test metrics.
RunResult run_single(const TrainConfig& config, const std::string& name, std::size_t max_steps = 0);

/// Trains `variants` for every seed. Errors in one cell are recorded and the
/// remaining cells still run.
std::vector<RunResult> run_variants(const TrainConfig& base, const std::vector<Variant>& variants,
                                    const SweepOptions& options);
std::vector<RunResult> run_ablation(const TrainConfig& base, const std::vector<std::string>& groups,
                                    const SweepOptions& options);
std::vector<RunResult> sweep_lambda(const TrainConfig& base, const std::vector<double>& lambdas,
                                    const SweepOptions& options);

struct SummaryRow {
  std::string variant;
  double lambda = 0.0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (0 with one run)
  std::size_t runs = 0;
};

/// mean/std per (variant, metric) over the successful runs, in first-seen
/// variant order. Metrics include sec_per_batch.
std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs);
double summary_mean(const std::vector<SummaryRow>& rows, const std::string& variant, const std::string& metric);

void write_runs_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

/// Small problem for finite-difference checks: C=4, d=8, M=4, L=2.
TrainConfig gradcheck_config();

struct HeadGradCheck {
  std::string variant;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Checks the full objective (classification loss plus weighted consistency
/// term) over `samples` training samples for the full head, the
/// pre-interaction head and the three reference heads. Each parameter entry
/// is first moved off its initialization by seeded N(0, jitter²) noise so
/// the attention maps are not near-uniform.
std::vector<HeadGradCheck> gradcheck_heads(const TrainConfig& config, std::size_t samples, double jitter = 0.2,
                                           const GradCheckOptions& options = {1e-3, 1e-8, true});

}  // namespace pvlr
