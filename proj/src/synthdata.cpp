#include "pvlr/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvlr/errors.hpp"

namespace pvlr {

void SceneModel::validate() const {
  if (prior.empty()) throw ContractError("SceneModel: no scenes");
  if (activation.size() != prior.size()) throw ContractError("SceneModel: one activation row per scene required");
  double total = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw ContractError("SceneModel: negative prior weight");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("SceneModel: prior does not sum to 1");
  const std::size_t c = activation.front().size();
  if (c == 0) throw ContractError("SceneModel: no labels");
  for (const auto& row : activation) {
    if (row.size() != c) throw ContractError("SceneModel: ragged activation table");
    for (double q : row) {
      if (!(q >= 0.0 && q <= 1.0)) throw ContractError("SceneModel: activation outside [0,1]");
    }
  }
}

double SceneModel::pair_probability(std::size_t i, std::size_t j) const {
  double p = 0.0;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    p += prior[k] * activation[k][i] * (i == j ? 1.0 : activation[k][j]);
  }
  return p;
}

SceneModel make_scene_model(const SceneModelSpec& spec, Rng& rng) {
  if (spec.num_labels == 0 || spec.num_scenes == 0) throw ConfigError("scene model: C and K must be positive");
  if (spec.core_labels > spec.num_labels) throw ConfigError("scene model: more core labels than labels");
  SceneModel model;
  model.prior.resize(spec.num_scenes);
  for (auto& p : model.prior) p = 0.5 + rng.uniform();
  const double total = std::accumulate(model.prior.begin(), model.prior.end(), 0.0);
  for (auto& p : model.prior) p /= total;

  std::vector<std::size_t> order(spec.num_labels);
  for (std::size_t k = 0; k < spec.num_scenes; ++k) {
    std::vector<double> row(spec.num_labels, spec.background_rate);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < spec.core_labels; ++i) {
      std::swap(order[i], order[i + rng.index(spec.num_labels - i)]);
      row[order[i]] = rng.uniform(spec.core_low, spec.core_high);
    }
    model.activation.push_back(std::move(row));
  }
  model.validate();
  return model;
}

LabelDraw sample_labels(const SceneModel& model, Rng& rng, std::size_t max_positives) {
  const bool satisfiable = std::any_of(model.activation.begin(), model.activation.end(), [](const auto& row) {
    return std::any_of(row.begin(), row.end(), [](double q) { return q > 0.0; });
  });
  if (!satisfiable) throw UnsatisfiableError("sample_labels: every activation probability is zero");
  if (max_positives == 0) throw UnsatisfiableError("sample_labels: no room for a positive label");

  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    LabelDraw draw;
    const double u = rng.uniform();
    double acc = 0.0;
    draw.scene = model.prior.size() - 1;
    for (std::size_t k = 0; k < model.prior.size(); ++k) {
      acc += model.prior[k];
      if (u < acc) {
        draw.scene = k;
        break;
      }
    }
    const auto& q = model.activation[draw.scene];
    draw.y.resize(q.size());
    std::size_t positives = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      draw.y[j] = rng.uniform() < q[j] ? 1.0 : 0.0;
      positives += draw.y[j] == 1.0;
    }
    if (positives >= 1 && positives <= max_positives) return draw;
  }
  throw UnsatisfiableError("sample_labels: no admissible label set after repeated draws");
}

PrototypeBank make_prototypes(const TextWorld& text, double scale, double prototype_noise, double noise_sigma,
                              Rng& rng, double mixing_identity) {
  if (!(mixing_identity >= 0.0 && mixing_identity <= 1.0)) {
    throw ConfigError("make_prototypes: mixing_identity must lie in [0, 1]");
  }
  const Tensor names = build_name_embeddings(text.vocab, text.table, text.encoder);
  const std::size_t c = names.rows(), d = names.cols();
  std::vector<double> a = rng.normal_vector(d * d, 0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (auto& v : a) v *= 1.0 - mixing_identity;
  for (std::size_t k = 0; k < d; ++k) a[k * d + k] += mixing_identity;
  const Tensor mixing({d, d}, std::move(a));
  PrototypeBank bank;
  bank.noise_sigma = noise_sigma;
  bank.aligned = matmul_nt(names, mixing).detach();
  std::vector<double> protos(c * d);
  const auto u = bank.aligned.values();
  const double eps_sd = prototype_noise / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < c; ++j) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += u[j * d + k] * u[j * d + k];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw DegenerateInputError("make_prototypes: degenerate text embedding");
    for (std::size_t k = 0; k < d; ++k) protos[j * d + k] = scale * (u[j * d + k] / norm + rng.normal(0.0, eps_sd));
  }
  bank.prototypes = Tensor({c, d}, std::move(protos));
  return bank;
}

Tensor render_features(std::span<const double> y, const PrototypeBank& bank, Rng& rng, std::size_t num_tokens,
                       std::size_t placements_per_label) {
  const std::size_t c = bank.prototypes.rows(), d = bank.prototypes.cols();
  if (y.size() != c) throw DimensionError("render_features: target length does not match prototype count");
  const std::size_t positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1.0));
  if (positives * placements_per_label > num_tokens) {
    throw CapacityError("render_features: " + std::to_string(positives) + " positives x " +
                        std::to_string(placements_per_label) + " placements exceed " + std::to_string(num_tokens) +
                        " token slots");
  }
  const double sigma = bank.noise_sigma;
  std::vector<double> x(num_tokens * d);
  for (auto& v : x) v = sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0;

  std::vector<std::size_t> free_slots(num_tokens);
  std::iota(free_slots.begin(), free_slots.end(), std::size_t{0});
  std::size_t remaining = num_tokens;
  const auto protos = bank.prototypes.values();
  for (std::size_t j = 0; j < c; ++j) {
    if (y[j] != 1.0) continue;
    for (std::size_t r = 0; r < placements_per_label; ++r) {
      const std::size_t pick = rng.index(remaining);
      const std::size_t slot = free_slots[pick];
      free_slots[pick] = free_slots[--remaining];
      for (std::size_t k = 0; k < d; ++k) {
        x[slot * d + k] = protos[j * d + k] + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
      }
    }
  }
  return Tensor({num_tokens, d}, std::move(x));
}

void DatasetSpec::validate() const {
  if (num_labels == 0 || dim == 0 || num_tokens == 0 || num_scenes == 0) {
    throw ConfigError("dataset: C, d, M and K must be positive");
  }
  if (train_size == 0 || test_size == 0) throw ConfigError("dataset: split sizes must be >= 1");
  if (placements_per_label == 0 || placements_per_label > num_tokens) {
    throw ConfigError("dataset: placements_per_label must lie in [1, M]");
  }
  if (core_labels > num_labels) throw ConfigError("dataset: core_labels exceeds C");
  if (!(core_low >= 0.0 && core_low <= core_high && core_high <= 1.0)) throw ConfigError("dataset: bad core range");
  if (!(background_rate >= 0.0 && background_rate <= 1.0)) throw ConfigError("dataset: bad background rate");
  if (!(noise_sigma >= 0.0) || !(prototype_scale > 0.0) || !(prototype_noise >= 0.0)) {
    throw ConfigError("dataset: noise and scale parameters must be nonnegative");
  }
  if (!(text_gain > 0.0)) throw ConfigError("dataset: text_gain must be positive");
  if (!(mixing_identity >= 0.0 && mixing_identity <= 1.0)) throw ConfigError("dataset: mixing_identity must lie in [0, 1]");
}

namespace {

SyntheticSplit make_split(const SceneModel& scenes, const PrototypeBank& bank, const DatasetSpec& spec, const Rng& stream,
                          std::size_t size) {
  SyntheticSplit split;
  split.features.reserve(size);
  split.targets.reserve(size);
  split.scene_ids.reserve(size);
  const std::size_t max_positives = spec.num_tokens / spec.placements_per_label;
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng = stream.fork(i);
    LabelDraw draw = sample_labels(scenes, rng, max_positives);
    split.features.push_back(render_features(draw.y, bank, rng, spec.num_tokens, spec.placements_per_label));
    split.targets.push_back(std::move(draw.y));
    split.scene_ids.push_back(draw.scene);
  }
  return split;
}

}  // namespace

SyntheticDataset make_dataset(const DatasetSpec& spec, const TextWorld& text) {
  spec.validate();
  if (text.vocab.size() != spec.num_labels || text.encoder.out_dim() != spec.dim) {
    throw ConfigError("dataset: text world does not match C or d");
  }
  const Rng root(spec.seed);
  SyntheticDataset data;
  Rng scene_rng = root.fork(4);
  data.scenes = make_scene_model({spec.num_labels, spec.num_scenes, spec.core_labels, spec.core_low, spec.core_high,
                                  spec.background_rate},
                                 scene_rng);
  Rng proto_rng = root.fork(3);
  data.prototypes = make_prototypes(text, spec.prototype_scale, spec.prototype_noise, spec.noise_sigma, proto_rng,
                                     spec.mixing_identity);
  data.train = make_split(data.scenes, data.prototypes, spec, root.fork(1), spec.train_size);
  data.test = make_split(data.scenes, data.prototypes, spec, root.fork(2), spec.test_size);
  return data;
}

}  // namespace pvlr
