#pragma once

// Run configuration: dataset, head, loss and optimization settings, read from
// and written to UTF-8 JSON. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvlr/head.hpp"
#include "pvlr/objective.hpp"
#include "pvlr/synthdata.hpp"

namespace pvlr {

struct OptimConfig {
  double lr_max = 1e-4;
  double lr_min = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct TrainConfig {
  DatasetSpec data;
  HeadConfig head;
  LossConfig loss;
  OptimConfig optim;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double ema_decay = 0.9997;
  /// Shuffling stream; the dataset and initialization carry their own seeds.
  std::uint64_t seed = 0;
  /// Drop the knowledge-consistency term from the graph entirely.
  bool use_kcr = true;
  bool eval_ema = true;
  double eval_threshold = 0.5;
  std::size_t eval_top_k = 3;
  /// Optional label-name file, one name per line; builtin names otherwise.
  std::string vocab_file;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// Set data.seed, head.init_seed and seed from one run seed.
  void reseed(std::uint64_t run_seed);
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Overlays `patch` on `base`. Every key of `patch` must already exist in
/// `base`; ConfigError otherwise.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Sets one field by dotted path ("head.use_kap") or by a leaf name that is
/// unique in the tree ("use_kap"). The text is parsed as JSON when possible
/// and as a plain string otherwise.
void apply_override(nlohmann::json& config, const std::string& key, const std::string& value);

TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
/// Loads `path` (or defaults when empty), then applies key/value overrides.
TrainConfig resolve_config(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides);
void save_config(const std::filesystem::path& path, const TrainConfig& c);

}  // namespace pvlr
