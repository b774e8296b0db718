#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pvlr {

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`.
std::uint64_t hash_string(std::string_view text) noexcept;

/// Seeded generator. Substreams derived with `fork` are independent of the
/// order in which other substreams are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed)) {}

  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_ ^ mix_seed(stream + 0x9e3779b97f4a7c15ULL))); }

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::vector<double> uniform_vector(std::size_t n, double lo, double hi);
  std::vector<double> normal_vector(std::size_t n, double mean, double stddev);

  std::mt19937_64& engine() noexcept { return engine_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace pvlr
