#pragma once

#include <cstddef>
#include <string>

#include "pvlr/random.hpp"
#include "pvlr/tensor.hpp"

namespace pvlr {

/// Single-head scaled dot-product attention weights. No normalization, no
/// output projection; the skip connection is off unless requested.
struct AttentionBlock {
  Tensor w_query;
  Tensor w_key;
  Tensor w_value;
  std::size_t dim = 0;
  /// Adds the query input to the attended values.
  bool residual = false;

  /// Entries uniform in ±1/√dim. Registers `<prefix>.w_q|w_k|w_v` in `params`.
  static AttentionBlock create(const std::string& prefix, std::size_t dim, Rng& rng, ParameterSet& params,
                               bool residual = false);

  double scale() const;
};

struct AttentionResult {
  Tensor output;  ///< [n×d]
  Tensor map;     ///< [n×m], row-stochastic
};

/// softmax(E W_Q (E W_K)ᵀ / √d) · E W_V  (+ E with the skip connection)
AttentionResult self_attention(const AttentionBlock& block, const Tensor& e);

/// Queries from E[n×d], keys and values from Z[m×d].
AttentionResult cross_attention(const AttentionBlock& block, const Tensor& e, const Tensor& z);

}  // namespace pvlr
