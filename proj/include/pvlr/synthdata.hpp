#pragma once

// Seeded synthetic multi-label data. A latent scene is drawn from a prior,
// labels are independent Bernoulli draws given the scene, and each positive
// label is planted into token slots of an otherwise noisy M×d feature grid
// as a prototype aligned with that label's pseudo-text embedding.

#include <cstdint>
#include <vector>

#include "pvlr/head.hpp"
#include "pvlr/random.hpp"
#include "pvlr/tensor.hpp"

namespace pvlr {

struct SceneModel {
  std::vector<double> prior;                     ///< [K], sums to 1
  std::vector<std::vector<double>> activation;   ///< [K][C] in [0,1]

  std::size_t num_scenes() const noexcept { return prior.size(); }
  std::size_t num_labels() const noexcept { return activation.empty() ? 0 : activation.front().size(); }
  /// Throws ContractError when the prior or activations are malformed.
  void validate() const;
  /// Σ_k π_k q_k[i] q_k[j]  (i == j gives the marginal Σ_k π_k q_k[i]).
  double pair_probability(std::size_t i, std::size_t j) const;
};

struct SceneModelSpec {
  std::size_t num_labels = 20;
  std::size_t num_scenes = 5;
  /// Labels made typical of each scene.
  std::size_t core_labels = 6;
  double core_low = 0.3;
  double core_high = 0.8;
  double background_rate = 0.02;
};

SceneModel make_scene_model(const SceneModelSpec& spec, Rng& rng);

struct LabelDraw {
  std::vector<double> y;
  std::size_t scene = 0;
};

/// Scene ~ π, y_j ~ Bernoulli(q_scene[j]); redrawn until 1 <= Σy <= max_positives.
LabelDraw sample_labels(const SceneModel& model, Rng& rng, std::size_t max_positives);

struct PrototypeBank {
  Tensor prototypes;  ///< [C×d]
  Tensor aligned;     ///< [C×d], A·enc(name_j) before noise and scaling
  double noise_sigma = 0.0;
};

/// v_j = scale · (u_j/‖u_j‖ + ε_j),  u_j = A·enc(name_j),  ε_j ~ N(0, prototype_noise²/d),
/// A = w·I + (1-w)·G with G ~ N(0, 1/d) and w = `mixing_identity`.
PrototypeBank make_prototypes(const TextWorld& text, double scale, double prototype_noise, double noise_sigma,
                              Rng& rng, double mixing_identity = 0.0);

/// Background N(0, σ²) everywhere; each positive label overwrites
/// `placements_per_label` distinct random slots with v_j + N(0, σ²).
Tensor render_features(std::span<const double> y, const PrototypeBank& bank, Rng& rng, std::size_t num_tokens,
                       std::size_t placements_per_label);

struct DatasetSpec {
  std::size_t num_labels = 20;
  std::size_t dim = 32;
  std::size_t num_tokens = 16;
  std::size_t num_scenes = 5;
  std::size_t core_labels = 6;
  double core_low = 0.3;
  double core_high = 0.8;
  double background_rate = 0.02;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 7;
  std::uint64_t text_seed = 11;
  double noise_sigma = 1.0;
  double prototype_scale = 3.0;
  double prototype_noise = 0.5;
  std::size_t placements_per_label = 1;
  /// Output gain of the frozen text encoder.
  double text_gain = 1.0;
  double mixing_identity = 0.0;

  void validate() const;
};

struct SyntheticSplit {
  std::vector<Tensor> features;           ///< N tensors of [M×d]
  std::vector<std::vector<double>> targets;  ///< N multi-hot rows of length C
  std::vector<std::size_t> scene_ids;

  std::size_t size() const noexcept { return features.size(); }
};

struct SyntheticDataset {
  SceneModel scenes;
  PrototypeBank prototypes;
  SyntheticSplit train;
  SyntheticSplit test;
};

/// Fully determined by `spec` (including its seed). Sample i of a split draws from
/// its own substream, so splits and samples are independent of each other.
SyntheticDataset make_dataset(const DatasetSpec& spec, const TextWorld& text);

}  // namespace pvlr
