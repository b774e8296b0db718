#include "pvlr/attention.hpp"

#include <cmath>

#include "pvlr/errors.hpp"

namespace pvlr {

namespace {

Tensor init_weight(std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  return Tensor({dim, dim}, rng.uniform_vector(dim * dim, -bound, bound), true);
}

void check_features(const AttentionBlock& block, const Tensor& t, const char* what) {
  if (t.rank() != 2 || t.cols() != block.dim) {
    throw DimensionError(std::string("attention: ") + what + " " + shape_to_string(t.shape()) +
                         " does not match block dimension " + std::to_string(block.dim));
  }
  if (t.rows() == 0) throw EmptyInputError(std::string("attention: ") + what + " has no rows");
}

}  // namespace

AttentionBlock AttentionBlock::create(const std::string& prefix, std::size_t dim, Rng& rng, ParameterSet& params,
                                     bool residual) {
  if (dim == 0) throw ContractError("AttentionBlock: dimension must be positive");
  AttentionBlock block;
  block.dim = dim;
  block.residual = residual;
  block.w_query = params.add(prefix + ".w_q", init_weight(dim, rng));
  block.w_key = params.add(prefix + ".w_k", init_weight(dim, rng));
  block.w_value = params.add(prefix + ".w_v", init_weight(dim, rng));
  return block;
}

double AttentionBlock::scale() const { return 1.0 / std::sqrt(static_cast<double>(dim)); }

AttentionResult cross_attention(const AttentionBlock& block, const Tensor& e, const Tensor& z) {
  check_features(block, e, "query input");
  check_features(block, z, "key/value input");
  const Tensor q = linear(e, block.w_query);
  const Tensor k = linear(z, block.w_key);
  const Tensor v = linear(z, block.w_value);
  Tensor map = softmax_rows(affine(matmul_nt(q, k), block.scale()));
  Tensor output = matmul(map, v);
  if (block.residual) output = add(e, output);
  return {std::move(output), std::move(map)};
}

AttentionResult self_attention(const AttentionBlock& block, const Tensor& e) { return cross_attention(block, e, e); }

}  // namespace pvlr
