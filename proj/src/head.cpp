#include "pvlr/head.hpp"

#include <cmath>

#include "pvlr/errors.hpp"

namespace pvlr {

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), rng.uniform_vector(n, -bound, bound), true);
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

}  // namespace

std::string_view to_string(PromptingMode mode) { return mode == PromptingMode::post ? "post" : "pre"; }

std::string_view to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::pvlr:
      return "pvlr";
    case HeadMode::classifier_learning:
      return "classifier_learning";
    case HeadMode::label_rep:
      return "label_rep";
    case HeadMode::label_rep_dma:
      return "label_rep_dma";
  }
  return "unknown";
}

PromptingMode parse_prompting_mode(std::string_view text) {
  if (text == "post") return PromptingMode::post;
  if (text == "pre") return PromptingMode::pre;
  throw ConfigError("unknown prompting mode '" + std::string(text) + "' (expected post or pre)");
}

HeadMode parse_head_mode(std::string_view text) {
  for (HeadMode m : {HeadMode::pvlr, HeadMode::classifier_learning, HeadMode::label_rep, HeadMode::label_rep_dma}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown head mode '" + std::string(text) + "'");
}

void HeadConfig::validate() const {
  if (num_labels == 0 || dim == 0 || num_tokens == 0) throw ConfigError("head: C, d and M must be positive");
  if (head_mode != HeadMode::pvlr) return;
  if (!use_kap && !use_cap) throw ConfigError("head: pvlr mode needs at least one of use_kap / use_cap");
  if ((use_channel_interaction || use_relation_aggregation) && !(use_kap && use_cap)) {
    throw ConfigError("head: channel interaction and relation aggregation need both prompting branches");
  }
  if (prompting_mode == PromptingMode::pre && !use_cap) {
    throw ConfigError("head: pre-interaction prompting needs the context branch");
  }
}

TextWorld TextWorld::create(const LabelVocabulary& vocab, std::size_t dim, std::uint64_t seed, double gain) {
  return TextWorld{vocab, TokenEmbeddingTable(mix_seed(seed ^ 0x7e57ULL), dim),
                   PseudoTextEncoder(mix_seed(seed ^ 0xe4c0deULL), dim, dim, gain)};
}

IfmMlp IfmMlp::create(const std::string& prefix, std::size_t dim, Rng& rng, ParameterSet& params) {
  IfmMlp mlp;
  const double b1 = 1.0 / std::sqrt(2.0 * static_cast<double>(dim));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(dim));
  mlp.w1 = params.add(prefix + ".w1", uniform_param({2 * dim, dim}, b1, rng));
  mlp.b1 = params.add(prefix + ".b1", uniform_param({dim}, b1, rng));
  mlp.w2 = params.add(prefix + ".w2", uniform_param({dim, dim}, b2, rng));
  mlp.b2 = params.add(prefix + ".b2", uniform_param({dim}, b2, rng));
  return mlp;
}

Tensor IfmMlp::forward(const Tensor& x) const { return linear(relu(linear(x, w1, b1)), w2, b2); }

// ---------------------------------------------------------------------------

BranchResult kap_forward(const AttentionBlock& block, const Tensor& t_hard) {
  auto [out, map] = self_attention(block, t_hard);
  return {std::move(out), std::move(map)};
}

BranchResult cap_forward(const AttentionBlock* cross_block, const AttentionBlock& self_block, const Tensor& t_soft,
                         const Tensor& x) {
  const Tensor conditioned = cross_block ? cross_attention(*cross_block, t_soft, x).output : t_soft;
  auto [out, map] = self_attention(self_block, conditioned);
  return {std::move(out), std::move(map)};
}

Tensor pre_interaction_prompts(const AttentionBlock& block, const Tensor& queries, const Tensor& x) {
  if (!queries.defined() || queries.rows() == 0) return Tensor();
  return cross_attention(block, queries, x).output;
}

Tensor ifm_interact(const IfmMlp& mlp, const Tensor& t_ka, const Tensor& t_ca) {
  check_pair(t_ka, t_ca, "ifm_interact");
  return add(t_ca, mlp.forward(concat_cols(t_ka, t_ca)));
}

RelationResult relation_aggregate(const AlphaParam& alpha, const Tensor& m_ka, const Tensor& m_ca,
                                  const Tensor& t_ca, bool residual) {
  check_pair(m_ka, m_ca, "relation_aggregate");
  if (m_ka.rank() != 2 || m_ka.rows() != m_ka.cols() || m_ka.cols() != t_ca.rows()) {
    throw DimensionError("relation_aggregate: maps " + shape_to_string(m_ka.shape()) + " do not fit embeddings " +
                         shape_to_string(t_ca.shape()));
  }
  const Tensor a = alpha.value();
  Tensor blended = add(scale_by(m_ka, a), scale_by(m_ca, affine(a, -1.0, 1.0)));
  Tensor t = matmul(blended, t_ca);
  if (residual) t = add(t_ca, t);
  return {std::move(t), std::move(blended)};
}

DmaResult dma_forward(const AttentionBlock* v2s_block, const AttentionBlock* s2v_block, const Tensor& t,
                      const Tensor& x) {
  if (t.rank() != 2 || x.rank() != 2 || t.cols() != x.cols()) {
    throw DimensionError("dma_forward: label representations " + shape_to_string(t.shape()) +
                         " and visual features " + shape_to_string(x.shape()) + " differ in width");
  }
  DmaResult r;
  if (v2s_block) {
    auto v2s = cross_attention(*v2s_block, t, x);
    r.t_vs = std::move(v2s.output);
    r.v2s_map = std::move(v2s.map);
  } else {
    r.t_vs = t;
  }
  if (s2v_block) {
    auto s2v = cross_attention(*s2v_block, x, t);
    r.x_sv = row_mean(s2v.output);
    r.s2v_map = std::move(s2v.map);
  } else {
    r.x_sv = row_mean(x);
  }
  return r;
}

Tensor predict(const Tensor& x_sv, const Tensor& t_vs, Tensor* logits_out) {
  Tensor logits = matvec(t_vs, x_sv);
  Tensor probs = sigmoid(logits);
  if (logits_out) *logits_out = std::move(logits);
  return probs;
}

// ---------------------------------------------------------------------------

PvlrHead::PvlrHead(HeadConfig config, const TextWorld& text) : config_(config), text_(text) {
  config_.validate();
  if (text_.vocab.size() != config_.num_labels) {
    throw ConfigError("head: vocabulary has " + std::to_string(text_.vocab.size()) + " labels, config expects " +
                      std::to_string(config_.num_labels));
  }
  if (text_.encoder.out_dim() != config_.dim || text_.table.dim() != config_.dim) {
    throw ConfigError("head: text encoder width does not match d");
  }
  const std::size_t d = config_.dim;
  const std::size_t c = config_.num_labels;
  t_hard_ = build_hard_prompts(text_.vocab, text_.table, text_.encoder);
  t_names_ = build_name_embeddings(text_.vocab, text_.table, text_.encoder);
  label_words_ = label_word_embeddings(text_.vocab, text_.table);

  Rng rng(config_.init_seed);
  const bool res = config_.residual;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  switch (config_.head_mode) {
    case HeadMode::pvlr:
      if (config_.use_kap) kap_block_ = AttentionBlock::create("kap.attn", d, rng, params_, res);
      if (config_.use_cap) {
        if (config_.prompting_mode == PromptingMode::post) {
          prompts_ = SoftPromptBank::create("cap.prompt", config_.prompt_len, d, rng, params_);
          if (config_.use_context_attention) cap_cross_ = AttentionBlock::create("cap.cross", d, rng, params_, res);
        } else {
          if (config_.prompt_len > 0) {
            pre_queries_ = params_.add("cap.query", Tensor({config_.prompt_len, d},
                                                           rng.normal_vector(config_.prompt_len * d, 0.0, 0.02), true));
          }
          cap_cross_ = AttentionBlock::create("cap.pre_cross", d, rng, params_, res);
        }
        cap_self_ = AttentionBlock::create("cap.self", d, rng, params_, res);
      }
      if (config_.use_channel_interaction) mlp_ = IfmMlp::create("ifm.mlp", d, rng, params_);
      if (config_.use_relation_aggregation) alpha_ = AlphaParam{params_.add("ifm.alpha_raw", Tensor::scalar(0.0, true))};
      if (config_.use_v2s) v2s_ = AttentionBlock::create("dma.v2s", d, rng, params_, config_.dma_residual);
      if (config_.use_s2v) s2v_ = AttentionBlock::create("dma.s2v", d, rng, params_, config_.dma_residual);
      break;
    case HeadMode::classifier_learning:
      cl_cross_ = AttentionBlock::create("cl.cross", d, rng, params_, config_.dma_residual);
      cl_weight_ = params_.add("cl.weight", uniform_param({c, d}, bound, rng));
      cl_bias_ = params_.add("cl.bias", Tensor::zeros({c}, true));
      break;
    case HeadMode::label_rep:
      break;
    case HeadMode::label_rep_dma:
      v2s_ = AttentionBlock::create("dma.v2s", d, rng, params_, config_.dma_residual);
      s2v_ = AttentionBlock::create("dma.s2v", d, rng, params_, config_.dma_residual);
      break;
  }
}

void PvlrHead::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.dim || x.rows() == 0) {
    throw DimensionError("head: visual features " + shape_to_string(x.shape()) + " must be [M×" +
                         std::to_string(config_.dim) + "]");
  }
}

BatchContext PvlrHead::prepare() const {
  BatchContext ctx;
  if (config_.head_mode != HeadMode::pvlr) return ctx;
  if (kap_block_) {
    auto kap = kap_forward(*kap_block_, t_hard_);
    ctx.t_ka = std::move(kap.embeddings);
    ctx.m_ka = std::move(kap.map);
  }
  if (config_.use_cap && config_.prompting_mode == PromptingMode::post) {
    ctx.t_soft = build_soft_prompts(label_words_, text_.encoder, prompts_.stacked());
  }
  return ctx;
}

HeadOutput PvlrHead::forward(const BatchContext& context, const Tensor& x) const {
  check_input(x);
  return config_.head_mode == HeadMode::pvlr ? forward_pvlr(context, x) : forward_reference(x);
}

HeadOutput PvlrHead::forward_pvlr(const BatchContext& ctx, const Tensor& x) const {
  HeadOutput out;
  out.t_ka = ctx.t_ka;
  out.m_ka = ctx.m_ka;

  if (config_.use_cap) {
    const AttentionBlock* cross = nullptr;
    if (config_.prompting_mode == PromptingMode::pre) {
      out.t_soft = build_soft_prompts(label_words_, text_.encoder, pre_interaction_prompts(*cap_cross_, pre_queries_, x));
    } else {
      out.t_soft = ctx.t_soft;
      if (cap_cross_) cross = &*cap_cross_;
    }
    auto cap = cap_forward(cross, *cap_self_, out.t_soft, x);
    out.t_ca = std::move(cap.embeddings);
    out.m_ca = std::move(cap.map);
    out.t_cap = out.t_ca;
  }

  if (config_.use_kap && config_.use_cap) {
    if (mlp_) out.t_ca = ifm_interact(*mlp_, out.t_ka, out.t_ca);
    if (alpha_) {
      auto rel = relation_aggregate(*alpha_, out.m_ka, out.m_ca, out.t_ca, config_.residual);
      out.t = std::move(rel.t);
      out.relation_map = std::move(rel.map);
      out.alpha = alpha_->value().item();
    } else {
      out.t = out.t_ca;
    }
  } else if (config_.use_cap) {
    out.relation_map = out.m_ca;
    out.t = matmul(out.m_ca, out.t_ca);
    if (config_.residual) out.t = add(out.t_ca, out.t);
  } else {
    out.relation_map = out.m_ka;
    out.t = matmul(out.m_ka, out.t_ka);
    if (config_.residual) out.t = add(out.t_ka, out.t);
  }

  auto dma = dma_forward(v2s_ ? &*v2s_ : nullptr, s2v_ ? &*s2v_ : nullptr, out.t, x);
  out.t_vs = std::move(dma.t_vs);
  out.x_sv = std::move(dma.x_sv);
  out.v2s_map = std::move(dma.v2s_map);
  out.s2v_map = std::move(dma.s2v_map);
  out.probs = predict(out.x_sv, out.t_vs, &out.logits);
  return out;
}

HeadOutput PvlrHead::forward_reference(const Tensor& x) const {
  HeadOutput out;
  out.t = t_hard_;
  switch (config_.head_mode) {
    case HeadMode::classifier_learning: {
      auto attended = cross_attention(*cl_cross_, t_hard_, x);
      out.t_vs = attended.output;
      out.v2s_map = attended.map;
      out.logits = add(rowwise_dot(attended.output, cl_weight_), cl_bias_);
      out.probs = sigmoid(out.logits);
      break;
    }
    case HeadMode::label_rep: {
      out.x_sv = row_mean(x);
      out.t_vs = t_hard_;
      out.probs = predict(out.x_sv, out.t_vs, &out.logits);
      break;
    }
    case HeadMode::label_rep_dma: {
      auto dma = dma_forward(&*v2s_, &*s2v_, t_hard_, x);
      out.t_vs = std::move(dma.t_vs);
      out.x_sv = std::move(dma.x_sv);
      out.v2s_map = std::move(dma.v2s_map);
      out.s2v_map = std::move(dma.s2v_map);
      out.probs = predict(out.x_sv, out.t_vs, &out.logits);
      break;
    }
    case HeadMode::pvlr:
      throw ContractError("forward_reference: pvlr is not a reference head");
  }
  return out;
}

}  // namespace pvlr
