#pragma once

// Multi-label evaluation: mean average precision, and class-wise / overall
// precision, recall and F1 under a score threshold or a per-sample top-k rule.
//
// Ranking ties are broken by ascending original index everywhere.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pvlr {

/// Row-major N×C scores and {0,1} targets.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t samples, std::size_t classes);
  ScoreMatrix(std::size_t samples, std::size_t classes, std::vector<double> scores, std::vector<double> targets);

  std::size_t samples() const noexcept { return samples_; }
  std::size_t classes() const noexcept { return classes_; }

  double score(std::size_t i, std::size_t j) const { return scores_[i * classes_ + j]; }
  double target(std::size_t i, std::size_t j) const { return targets_[i * classes_ + j]; }
  void set_row(std::size_t i, std::span<const double> scores, std::span<const double> targets);

  std::vector<double> class_scores(std::size_t j) const;
  std::vector<double> class_targets(std::size_t j) const;
  const std::vector<double>& scores() const noexcept { return scores_; }
  const std::vector<double>& targets() const noexcept { return targets_; }

  std::vector<std::string> class_names;

 private:
  std::size_t samples_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> scores_;
  std::vector<double> targets_;
};

/// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> ranking(std::span<const double> scores);

/// Mean of precision@r over the ranks r holding a positive. Empty when there
/// are no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const double> targets);

struct PrfTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2PR/(P+R), or 0 when P+R == 0.
double harmonic_f1(double precision, double recall);

/// Predicted-positive masks, N×C row-major.
std::vector<bool> threshold_predictions(const ScoreMatrix& m, double threshold);
std::vector<bool> topk_predictions(const ScoreMatrix& m, std::size_t k);

PrfTriple class_prf(const ScoreMatrix& m, const std::vector<bool>& predicted);
PrfTriple overall_prf(const ScoreMatrix& m, const std::vector<bool>& predicted);
PrfTriple class_prf(const ScoreMatrix& m, double threshold);
PrfTriple overall_prf(const ScoreMatrix& m, double threshold);

struct TopkPrf {
  PrfTriple classwise;
  PrfTriple overall;
};
TopkPrf topk_prf(const ScoreMatrix& m, std::size_t k);

struct MeanAp {
  double value = 0.0;
  std::size_t skipped_classes = 0;
};
/// Classes without positives are skipped and counted.
MeanAp mean_average_precision(const ScoreMatrix& m);

struct MetricsReport {
  double map = 0.0, cp = 0.0, cr = 0.0, cf1 = 0.0, op = 0.0, or_ = 0.0, of1 = 0.0;
  double map_top3 = 0.0, cp_top3 = 0.0, cr_top3 = 0.0, cf1_top3 = 0.0, op_top3 = 0.0, or_top3 = 0.0, of1_top3 = 0.0;
  std::size_t skipped_classes = 0;

  static const std::vector<std::string>& column_names();
  std::vector<double> values() const;
};

struct EvalOptions {
  double threshold = 0.5;
  std::size_t top_k = 3;
};

/// map_top3 equals map: ranking metrics do not depend on the top-k rule.
MetricsReport evaluate(const ScoreMatrix& m, const EvalOptions& options = {});

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// CSV with a header row of class names and one row per sample.
std::vector<std::vector<double>> read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header);
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      std::span<const double> values, std::size_t columns);
ScoreMatrix read_score_matrix(const std::filesystem::path& scores, const std::filesystem::path& targets);
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace pvlr
