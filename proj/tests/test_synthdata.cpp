#include <gtest/gtest.h>

#include <cmath>

#include "pvlr/errors.hpp"
#include "pvlr/synthdata.hpp"

using namespace pvlr;

namespace {

TextWorld world(std::size_t c, std::size_t d, std::uint64_t seed = 11) {
  return TextWorld::create(LabelVocabulary::builtin(c), d, seed);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

DatasetSpec tiny_spec() {
  DatasetSpec s;
  s.num_labels = 6;
  s.dim = 8;
  s.num_tokens = 8;
  s.num_scenes = 3;
  s.core_labels = 3;
  s.train_size = 20;
  s.test_size = 10;
  return s;
}

}  // namespace

TEST(SceneModel, ValidateAndPairProbability) {
  SceneModel m{{0.25, 0.75}, {{0.2, 0.4}, {0.6, 0.0}}};
  EXPECT_NO_THROW(m.validate());
  EXPECT_DOUBLE_EQ(m.pair_probability(0, 0), 0.25 * 0.2 + 0.75 * 0.6);
  EXPECT_DOUBLE_EQ(m.pair_probability(0, 1), 0.25 * 0.2 * 0.4);
  SceneModel bad_prior{{0.5, 0.6}, {{0.1}, {0.1}}};
  EXPECT_THROW(bad_prior.validate(), ContractError);
  SceneModel bad_q{{1.0}, {{1.5}}};
  EXPECT_THROW(bad_q.validate(), ContractError);
  SceneModel ragged{{0.5, 0.5}, {{0.1, 0.2}, {0.1}}};
  EXPECT_THROW(ragged.validate(), ContractError);
}

TEST(SceneModel, GeneratedModelShape) {
  Rng rng(1);
  const SceneModel m = make_scene_model({20, 5, 6, 0.3, 0.8, 0.02}, rng);
  EXPECT_EQ(m.num_scenes(), 5u);
  EXPECT_EQ(m.num_labels(), 20u);
  for (const auto& row : m.activation) {
    std::size_t core = 0;
    for (double q : row) core += q != 0.02;
    EXPECT_EQ(core, 6u);
  }
  Rng r2(1);
  EXPECT_THROW(make_scene_model({4, 2, 5, 0.3, 0.8, 0.02}, r2), ConfigError);
}

TEST(SampleLabels, CooccurrenceMatchesConditionalOracle) {
  // Only the empty set is rejected when max_positives == C.
  const SceneModel m{{0.3, 0.7}, {{0.6, 0.5, 0.05}, {0.1, 0.4, 0.7}}};
  double p_empty = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    double e = m.prior[k];
    for (double q : m.activation[k]) e *= 1.0 - q;
    p_empty += e;
  }
  Rng rng(2);
  const int n = 200000;
  std::vector<double> counts(9, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto d = sample_labels(m, rng, 3);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) counts[a * 3 + b] += d.y[a] * d.y[b];
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const double expected = m.pair_probability(a, b) / (1.0 - p_empty);
      const double se = std::sqrt(expected * (1.0 - expected) / n);
      EXPECT_NEAR(counts[a * 3 + b] / n, expected, 5.0 * se + 1e-4) << a << "," << b;
    }
  }
}

TEST(SampleLabels, RespectsBoundsAndErrors) {
  Rng rng(3);
  const SceneModel m = make_scene_model({12, 3, 6, 0.5, 0.9, 0.1}, rng);
  for (int i = 0; i < 2000; ++i) {
    const auto d = sample_labels(m, rng, 2);
    const double pos = std::accumulate(d.y.begin(), d.y.end(), 0.0);
    EXPECT_GE(pos, 1.0);
    EXPECT_LE(pos, 2.0);
  }
  const SceneModel zero{{1.0}, {{0.0, 0.0}}};
  EXPECT_THROW(sample_labels(zero, rng, 2), UnsatisfiableError);
  EXPECT_THROW(sample_labels(m, rng, 0), UnsatisfiableError);
}

TEST(Prototypes, AlignmentWithDefaultNoise) {
  const DatasetSpec spec;
  const TextWorld w = world(spec.num_labels, spec.dim);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const PrototypeBank bank = make_prototypes(w, spec.prototype_scale, spec.prototype_noise, 1.0, rng);
    double mean_cos = 0.0;
    for (std::size_t j = 0; j < spec.num_labels; ++j) {
      mean_cos += cosine(row(bank.prototypes, j).values(), row(bank.aligned, j).values());
    }
    EXPECT_GE(mean_cos / static_cast<double>(spec.num_labels), 0.8);
  }
}

TEST(Prototypes, IdentityMixingAlignsWithNames) {
  const TextWorld w = world(5, 8);
  Rng rng(4);
  const PrototypeBank bank = make_prototypes(w, 2.0, 0.0, 0.0, rng, 1.0);
  const Tensor names = build_name_embeddings(w.vocab, w.table, w.encoder);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(cosine(row(bank.prototypes, j).values(), row(names, j).values()), 1.0, 1e-12);
    double norm = 0.0;
    const Tensor v_j = row(bank.prototypes, j);
    for (double v : v_j.values()) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 2.0, 1e-12);
  }
  Rng r2(4);
  EXPECT_THROW(make_prototypes(w, 2.0, 0.0, 0.0, r2, 1.5), ConfigError);
}

TEST(Render, NoiselessSinglePositive) {
  const TextWorld w = world(4, 6);
  Rng rng(5);
  const PrototypeBank bank = make_prototypes(w, 3.0, 0.5, 0.0, rng);
  const std::vector<double> y = {0, 1, 0, 0};
  const Tensor x = render_features(y, bank, rng, 5, 2);
  std::size_t planted = 0, zero = 0;
  for (std::size_t m = 0; m < 5; ++m) {
    bool is_zero = true, is_proto = true;
    for (std::size_t k = 0; k < 6; ++k) {
      is_zero &= x.at(m, k) == 0.0;
      is_proto &= x.at(m, k) == bank.prototypes.at(1, k);
    }
    planted += is_proto;
    zero += is_zero;
  }
  EXPECT_EQ(planted, 2u);
  EXPECT_EQ(zero, 3u);
}

TEST(Render, PlantedTokensStayCloseAtLowNoise) {
  const TextWorld w = world(4, 16);
  Rng rng(6);
  const PrototypeBank bank = make_prototypes(w, 3.0, 0.5, 0.1, rng);
  const std::vector<double> y = {0, 0, 1, 0};
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Tensor x = render_features(y, bank, rng, 4, 1);
    double best = -1.0;
    for (std::size_t m = 0; m < 4; ++m) best = std::max(best, cosine(row(x, m).values(), row(bank.prototypes, 2).values()));
    total += best;
  }
  EXPECT_GT(total / 1000.0, 0.9);
}

TEST(Render, CapacityAndShapeErrors) {
  const TextWorld w = world(4, 6);
  Rng rng(7);
  const PrototypeBank bank = make_prototypes(w, 3.0, 0.5, 1.0, rng);
  const std::vector<double> y = {1, 1, 1, 0};
  EXPECT_THROW(render_features(y, bank, rng, 5, 2), CapacityError);
  EXPECT_NO_THROW(render_features(y, bank, rng, 6, 2));
  const std::vector<double> short_y = {1, 0};
  EXPECT_THROW(render_features(short_y, bank, rng, 6, 1), DimensionError);
}

TEST(Dataset, DeterministicAndSubstreamed) {
  const DatasetSpec spec = tiny_spec();
  const TextWorld w = world(6, 8);
  const auto a = make_dataset(spec, w), b = make_dataset(spec, w);
  ASSERT_EQ(a.train.size(), 20u);
  ASSERT_EQ(a.test.size(), 10u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train.targets[i], b.train.targets[i]);
    EXPECT_TRUE(std::equal(a.train.features[i].values().begin(), a.train.features[i].values().end(),
                           b.train.features[i].values().begin()));
  }
  DatasetSpec longer = spec;
  longer.train_size = 30;
  const auto c = make_dataset(longer, w);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(c.train.targets[i], a.train.targets[i]);
  DatasetSpec other = spec;
  other.seed = 8;
  const auto d = make_dataset(other, w);
  bool differs = false;
  for (std::size_t i = 0; i < 20; ++i) differs |= d.train.features[i].values()[0] != a.train.features[i].values()[0];
  EXPECT_TRUE(differs);
}

TEST(Dataset, PositivesFitTokenGrid) {
  DatasetSpec spec = tiny_spec();
  spec.placements_per_label = 3;
  const auto data = make_dataset(spec, world(6, 8));
  for (const auto& y : data.train.targets) EXPECT_LE(std::accumulate(y.begin(), y.end(), 0.0) * 3.0, 8.0);
}

TEST(Dataset, ValidateRejectsBadSpecs) {
  const TextWorld w = world(6, 8);
  DatasetSpec s = tiny_spec();
  s.placements_per_label = 9;
  EXPECT_THROW(make_dataset(s, w), ConfigError);
  s = tiny_spec();
  s.train_size = 0;
  EXPECT_THROW(make_dataset(s, w), ConfigError);
  s = tiny_spec();
  s.text_gain = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_spec();
  s.num_labels = 7;
  EXPECT_THROW(make_dataset(s, w), ConfigError);
}
