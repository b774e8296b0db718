#pragma once

// Deterministic stand-in for a frozen text encoder. Token strings hash to
// seeded embedding vectors; sequences are mean-pooled and passed through a
// fixed two-layer perceptron. Sequence order therefore has no effect.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pvlr/random.hpp"
#include "pvlr/tensor.hpp"

namespace pvlr {

inline constexpr std::string_view kHardPromptTemplate = "This photo contains [CLS].";

class LabelVocabulary {
 public:
  /// Throws ContractError on an empty list or duplicate names.
  explicit LabelVocabulary(std::vector<std::string> names);

  /// One label name per line; blank lines are ignored.
  static LabelVocabulary from_file(const std::filesystem::path& path);
  /// First `count` entries of a built-in list of everyday object names,
  /// extended with "label_<k>" when more are requested.
  static LabelVocabulary builtin(std::size_t count);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t j) const { return names_.at(j); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  /// Vocabulary whose j-th name is names()[order[j]].
  LabelVocabulary permuted(const std::vector<std::size_t>& order) const;

 private:
  std::vector<std::string> names_;
};

/// Lowercased split on whitespace and ASCII punctuation. Throws
/// EmptyInputError when no token remains.
std::vector<std::string> tokenize(std::string_view text);

class TokenEmbeddingTable {
 public:
  TokenEmbeddingTable(std::uint64_t seed, std::size_t dim);

  /// Standard-normal vector determined by (seed, token).
  Tensor embed(std::string_view token) const;
  /// [n×dim] embeddings of each token in order.
  Tensor embed_all(const std::vector<std::string>& tokens) const;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

/// Frozen perceptron  x -> tanh(x W1 + b1) W2 + b2,  d_tok -> d_tok -> d.
/// `gain` scales the output layer.
/// Its weights never require gradients; the map is differentiable with
/// respect to its input.
class PseudoTextEncoder {
 public:
  PseudoTextEncoder(std::uint64_t seed, std::size_t token_dim, std::size_t out_dim, double gain = 1.0);

  /// Row-wise encoding of [n×d_tok] -> [n×d].
  Tensor encode_rows(const Tensor& rows) const;
  std::size_t token_dim() const noexcept { return token_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }

  /// Raw weights, for frozen-state checks.
  std::vector<double> weight_snapshot() const;

 private:
  std::size_t token_dim_;
  std::size_t out_dim_;
  Tensor w1_, b1_, w2_, b2_;
};

/// Encoder applied to the mean of the sequence vectors -> [d].
Tensor encode_sequence(const PseudoTextEncoder& encoder, const std::vector<Tensor>& sequence);

/// [C×d]: row j encodes the template with [CLS] replaced by name j.
Tensor build_hard_prompts(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                          const PseudoTextEncoder& encoder, std::string_view prompt_template = kHardPromptTemplate);

/// [C×d]: row j encodes the bare label name.
Tensor build_name_embeddings(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                             const PseudoTextEncoder& encoder);

/// Learnable prompt tokens shared by every label.
struct SoftPromptBank {
  std::vector<Tensor> tokens;  ///< each [d_tok]

  static SoftPromptBank create(const std::string& prefix, std::size_t count, std::size_t token_dim, Rng& rng,
                               ParameterSet& params);
  std::size_t size() const noexcept { return tokens.size(); }
  /// [L×d_tok]; undefined when L = 0.
  Tensor stacked() const;
};

/// [C×d]: row j encodes [p_1 .. p_L, s_j] where `prompts` is [L×d_tok]
/// (pass an undefined tensor for L = 0). Gradients flow into `prompts`.
Tensor build_soft_prompts(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                          const PseudoTextEncoder& encoder, const Tensor& prompts);

/// Same, with the label word embeddings already looked up (one [n_j×d_tok]
/// tensor per label).
Tensor build_soft_prompts(const std::vector<Tensor>& label_words, const PseudoTextEncoder& encoder,
                          const Tensor& prompts);

/// Word embeddings of every label name, in vocabulary order.
std::vector<Tensor> label_word_embeddings(const LabelVocabulary& vocab, const TokenEmbeddingTable& table);

}  // namespace pvlr
