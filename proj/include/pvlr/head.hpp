#pragma once

// Multi-label recognition head built from dual prompting over a frozen text
// encoder:
//
//   knowledge branch   T_hard --self-attn--> (T_ka, M_ka)           static per run
//   context branch     T_soft --cross-attn(X)--> --self-attn--> (T_ca, M_ca)
//   fusion             T_ca += MLP([T_ka, T_ca]);  T = (α M_ka + (1-α) M_ca) T_ca
//   dual-modal         T_vs = CrossAttn(T, X);  x_sv = GAP(CrossAttn(X, T))
//   prediction         p_j = σ(<x_sv, T_vs[j]>)
//
// Every mechanism can be switched off independently for ablations. Three
// reference heads start from the same static hard-prompt embeddings: learned
// classifiers over label-queried visual tokens, the embeddings scored against
// GAP(X) (no trainable parameters), and the embeddings through dual-modal
// attention.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvlr/attention.hpp"
#include "pvlr/text_sim.hpp"

namespace pvlr {

enum class PromptingMode { post, pre };
enum class HeadMode { pvlr, classifier_learning, label_rep, label_rep_dma };

std::string_view to_string(PromptingMode mode);
std::string_view to_string(HeadMode mode);
PromptingMode parse_prompting_mode(std::string_view text);
HeadMode parse_head_mode(std::string_view text);

struct HeadConfig {
  std::size_t num_labels = 20;
  std::size_t dim = 32;
  std::size_t num_tokens = 16;
  std::size_t prompt_len = 4;

  bool use_kap = true;
  bool use_cap = true;
  bool use_channel_interaction = true;
  bool use_relation_aggregation = true;
  bool use_v2s = true;
  bool use_s2v = true;
  /// Cross-attention of soft-prompt embeddings to X inside the context
  /// branch (the implicit route of visual clues into category centers).
  bool use_context_attention = true;
  /// Skip connections around the prompting-branch attention blocks and the
  /// relation step.
  bool residual = false;
  /// Skip connections around the dual-modal attention blocks.
  bool dma_residual = false;
  PromptingMode prompting_mode = PromptingMode::post;
  HeadMode head_mode = HeadMode::pvlr;

  std::uint64_t init_seed = 1;

  /// Throws ConfigError on inconsistent toggles.
  void validate() const;
};

/// Label vocabulary, seeded token table and frozen encoder shared by the head
/// and the synthetic data generator.
struct TextWorld {
  LabelVocabulary vocab;
  TokenEmbeddingTable table;
  PseudoTextEncoder encoder;

  static TextWorld create(const LabelVocabulary& vocab, std::size_t dim, std::uint64_t seed, double gain = 1.0);
};

/// α = sigmoid(raw); raw starts at 0.
struct AlphaParam {
  Tensor raw;
  Tensor value() const { return sigmoid(raw); }
};

/// 2d -> d -> d perceptron with ReLU.
struct IfmMlp {
  Tensor w1, b1, w2, b2;

  static IfmMlp create(const std::string& prefix, std::size_t dim, Rng& rng, ParameterSet& params);
  Tensor forward(const Tensor& x) const;
};

struct HeadOutput {
  Tensor probs;  ///< [C]
  Tensor t_ka, m_ka;
  Tensor t_soft;
  Tensor t_ca, m_ca;  ///< t_ca after channel interaction when enabled
  Tensor t_cap;       ///< context-branch output before channel interaction
  Tensor relation_map;  ///< map applied to produce t (blend, or a single branch map)
  Tensor t;       ///< relation-enhanced label representations
  Tensor t_vs;    ///< visual-to-semantic output (== t when disabled)
  Tensor x_sv;    ///< semantic-to-visual pooled vector (== GAP(X) when disabled)
  Tensor v2s_map;  ///< [C×M]
  Tensor s2v_map;  ///< [M×C]
  Tensor logits;   ///< [C]
  std::optional<double> alpha;

  /// Both branches active, so the knowledge-to-context regularizer applies.
  bool has_kcr_pair() const { return t_ka.defined() && t_cap.defined(); }
};

// Mechanism-level operations. Each is a pure function of its inputs.

struct BranchResult {
  Tensor embeddings;
  Tensor map;
};

BranchResult kap_forward(const AttentionBlock& block, const Tensor& t_hard);
/// Post-interaction context branch. With `cross_block` null the
/// cross-attention to X is skipped.
BranchResult cap_forward(const AttentionBlock* cross_block, const AttentionBlock& self_block, const Tensor& t_soft,
                         const Tensor& x);
/// Per-sample prompt tokens [L×d] from learnable queries attending over X.
Tensor pre_interaction_prompts(const AttentionBlock& block, const Tensor& queries, const Tensor& x);
/// T_ca + MLP([T_ka, T_ca]).
Tensor ifm_interact(const IfmMlp& mlp, const Tensor& t_ka, const Tensor& t_ca);
struct RelationResult {
  Tensor t;
  Tensor map;
};
/// (α M_ka + (1-α) M_ca) T_ca, plus T_ca when `residual`.
RelationResult relation_aggregate(const AlphaParam& alpha, const Tensor& m_ka, const Tensor& m_ca, const Tensor& t_ca,
                                  bool residual = false);

struct DmaResult {
  Tensor t_vs;
  Tensor x_sv;
  Tensor v2s_map;
  Tensor s2v_map;
};
/// Null blocks disable the respective direction: T_vs := T, x_sv := GAP(X).
DmaResult dma_forward(const AttentionBlock* v2s_block, const AttentionBlock* s2v_block, const Tensor& t,
                      const Tensor& x);
/// σ(T_vs · x_sv) -> [C]; also returns logits through `logits_out` when given.
Tensor predict(const Tensor& x_sv, const Tensor& t_vs, Tensor* logits_out = nullptr);

/// Sample-independent tensors shared by every sample of one forward batch.
struct BatchContext {
  Tensor t_ka, m_ka;
  Tensor t_soft;
};

class PvlrHead {
 public:
  PvlrHead(HeadConfig config, const TextWorld& text);

  const HeadConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  /// Hard-prompt embeddings [C×d], computed once at construction.
  const Tensor& t_hard() const noexcept { return t_hard_; }
  /// Bare-name embeddings [C×d].
  const Tensor& t_names() const noexcept { return t_names_; }

  /// Recomputes the sample-independent part of the graph from the current
  /// parameter values. Call once per optimizer step.
  BatchContext prepare() const;
  HeadOutput forward(const BatchContext& context, const Tensor& x) const;
  HeadOutput forward(const Tensor& x) const { return forward(prepare(), x); }

 private:
  HeadOutput forward_pvlr(const BatchContext& context, const Tensor& x) const;
  HeadOutput forward_reference(const Tensor& x) const;
  void check_input(const Tensor& x) const;

  HeadConfig config_;
  TextWorld text_;
  ParameterSet params_;
  Tensor t_hard_;
  Tensor t_names_;
  std::vector<Tensor> label_words_;

  std::optional<AttentionBlock> kap_block_;
  SoftPromptBank prompts_;
  Tensor pre_queries_;
  std::optional<AttentionBlock> cap_cross_;
  std::optional<AttentionBlock> cap_self_;
  std::optional<IfmMlp> mlp_;
  std::optional<AlphaParam> alpha_;
  std::optional<AttentionBlock> v2s_;
  std::optional<AttentionBlock> s2v_;

  // Reference heads.
  std::optional<AttentionBlock> cl_cross_;
  Tensor cl_weight_, cl_bias_;
};

}  // namespace pvlr
