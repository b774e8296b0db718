#pragma once

// Training loop: shuffled mini-batches, per-sample forward with a single
// backward over the batch mean, AdamW under a cosine schedule, parameter EMA,
// per-epoch evaluation and bit-exact checkpoint/resume.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pvlr/checkpoint.hpp"
#include "pvlr/config.hpp"
#include "pvlr/head.hpp"
#include "pvlr/metrics.hpp"
#include "pvlr/optim.hpp"
#include "pvlr/synthdata.hpp"

namespace pvlr {

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  ///< mean training batch loss over the epoch
  MetricsReport report;
};

std::vector<std::string> epoch_log_columns();
std::string epoch_log_csv(const std::vector<EpochRecord>& log);

LabelVocabulary vocabulary_for(const TrainConfig& config);

class Trainer {
 public:
  explicit Trainer(TrainConfig config);
  Trainer(TrainConfig config, std::shared_ptr<const SyntheticDataset> data);

  const TrainConfig& config() const noexcept { return config_; }
  const TextWorld& text() const noexcept { return *text_; }
  const SyntheticDataset& data() const noexcept { return *data_; }
  std::shared_ptr<const SyntheticDataset> shared_data() const noexcept { return data_; }
  PvlrHead& head() noexcept { return *head_; }
  const PvlrHead& head() const noexcept { return *head_; }
  const AdamState& adam() const noexcept { return adam_; }
  const EmaState& ema() const noexcept { return ema_; }

  std::size_t steps_per_epoch() const noexcept;
  std::size_t total_steps() const noexcept { return steps_per_epoch() * config_.epochs; }
  std::size_t step() const noexcept { return step_; }
  bool finished() const noexcept { return step_ >= total_steps(); }

  /// Sample indices of the batch taken at global step `step`.
  std::vector<std::size_t> batch_indices(std::size_t step) const;

  /// Batch-mean loss with gradients recorded (does not step the optimizer).
  Tensor batch_loss(const std::vector<std::size_t>& indices) const;

  /// One optimizer step: forward, backward, AdamW, EMA. Returns the batch
  /// loss. Throws NumericError naming the step on a non-finite loss.
  double train_step();

  /// Runs steps until `count` more have been taken or training is done.
  /// The epoch-end evaluation runs whenever an epoch completes.
  void run_steps(std::size_t count);

  /// Runs to completion and returns the per-epoch log.
  const std::vector<EpochRecord>& train(const std::function<void(const EpochRecord&)>& on_epoch = {});

  const std::vector<EpochRecord>& log() const noexcept { return log_; }

  /// Test-split scores with EMA weights (or live weights).
  ScoreMatrix score_split(const SyntheticSplit& split, bool use_ema) const;
  MetricsReport evaluate(bool use_ema) const;
  MetricsReport evaluate() const { return evaluate(config_.eval_ema); }

  /// Full forward record for one sample, for attention-map export.
  HeadOutput inspect(const Tensor& x, bool use_ema) const;

  double train_seconds() const noexcept { return train_seconds_; }
  std::size_t timed_steps() const noexcept { return timed_steps_; }
  double seconds_per_batch() const noexcept { return timed_steps_ ? train_seconds_ / timed_steps_ : 0.0; }

  TensorFile checkpoint() const;
  void restore(const TensorFile& file);
  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path);

  void set_epoch_callback(std::function<void(const EpochRecord&)> cb) { on_epoch_ = std::move(cb); }

 private:
  void end_epoch();
  const PvlrHead& eval_head(bool use_ema) const;

  TrainConfig config_;
  std::shared_ptr<const TextWorld> text_;
  std::shared_ptr<const SyntheticDataset> data_;
  std::unique_ptr<PvlrHead> head_;
  mutable std::unique_ptr<PvlrHead> shadow_head_;
  AdamState adam_;
  EmaState ema_;
  std::size_t step_ = 0;
  double epoch_loss_sum_ = 0.0;
  std::size_t epoch_batches_ = 0;
  std::vector<EpochRecord> log_;
  double train_seconds_ = 0.0;
  std::size_t timed_steps_ = 0;
  std::function<void(const EpochRecord&)> on_epoch_;
};

}  // namespace pvlr
