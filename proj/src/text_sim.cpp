#include "pvlr/text_sim.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "pvlr/errors.hpp"

namespace pvlr {

namespace {

constexpr std::array<std::string_view, 64> kBuiltinNames = {
    "person",   "bicycle", "car",      "motorcycle", "airplane",  "bus",      "train",   "truck",
    "boat",     "bench",   "bird",     "cat",        "dog",       "horse",    "sheep",   "cow",
    "elephant", "bear",    "zebra",    "giraffe",    "backpack",  "umbrella", "handbag", "tie",
    "suitcase", "frisbee", "skis",     "snowboard",  "kite",      "bottle",   "cup",     "fork",
    "knife",    "spoon",   "bowl",     "banana",     "apple",     "sandwich", "orange",  "broccoli",
    "carrot",   "pizza",   "donut",    "cake",       "chair",     "couch",    "bed",     "toilet",
    "tv",       "laptop",  "mouse",    "remote",     "keyboard",  "phone",    "oven",    "toaster",
    "sink",     "book",    "clock",    "vase",       "scissors",  "toothbrush", "tree",  "road"};

std::vector<std::string> tokenize_lenient(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Tensor init_frozen(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(rows));
  return Tensor({rows, cols}, rng.uniform_vector(rows * cols, -bound, bound));
}

// Name tokens for every label, validated once.
std::vector<std::vector<std::string>> name_tokens(const LabelVocabulary& vocab) {
  std::vector<std::vector<std::string>> out;
  out.reserve(vocab.size());
  for (const auto& name : vocab.names()) out.push_back(tokenize(name));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

LabelVocabulary::LabelVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ContractError("LabelVocabulary: at least one label is required");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ContractError("LabelVocabulary: empty label name");
    if (!seen.insert(n).second) throw ContractError("LabelVocabulary: duplicate label name '" + n + "'");
  }
}

LabelVocabulary LabelVocabulary::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("LabelVocabulary: cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    names.push_back(line.substr(first, last - first + 1));
  }
  return LabelVocabulary(std::move(names));
}

LabelVocabulary LabelVocabulary::builtin(std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    names.push_back(j < kBuiltinNames.size() ? std::string(kBuiltinNames[j]) : "label_" + std::to_string(j));
  }
  return LabelVocabulary(std::move(names));
}

LabelVocabulary LabelVocabulary::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != names_.size()) throw ContractError("LabelVocabulary::permuted: order has wrong length");
  std::vector<std::string> names;
  names.reserve(order.size());
  for (std::size_t j : order) names.push_back(names_.at(j));
  return LabelVocabulary(std::move(names));
}

std::vector<std::string> tokenize(std::string_view text) {
  auto tokens = tokenize_lenient(text);
  if (tokens.empty()) throw EmptyInputError("tokenize: text contains no tokens");
  return tokens;
}

// ---------------------------------------------------------------------------

TokenEmbeddingTable::TokenEmbeddingTable(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
  if (dim == 0) throw ContractError("TokenEmbeddingTable: dimension must be positive");
}

Tensor TokenEmbeddingTable::embed(std::string_view token) const {
  Rng rng(mix_seed(seed_) ^ hash_string(token));
  return Tensor({dim_}, rng.normal_vector(dim_, 0.0, 1.0));
}

Tensor TokenEmbeddingTable::embed_all(const std::vector<std::string>& tokens) const {
  std::vector<double> values;
  values.reserve(tokens.size() * dim_);
  for (const auto& t : tokens) {
    const Tensor e = embed(t);
    values.insert(values.end(), e.values().begin(), e.values().end());
  }
  return Tensor({tokens.size(), dim_}, std::move(values));
}

// ---------------------------------------------------------------------------

PseudoTextEncoder::PseudoTextEncoder(std::uint64_t seed, std::size_t token_dim, std::size_t out_dim, double gain)
    : token_dim_(token_dim), out_dim_(out_dim) {
  if (token_dim == 0 || out_dim == 0) throw ContractError("PseudoTextEncoder: dimensions must be positive");
  Rng rng(seed);
  w1_ = init_frozen(token_dim, token_dim, rng);
  b1_ = Tensor({token_dim}, rng.uniform_vector(token_dim, -0.1, 0.1));
  w2_ = init_frozen(token_dim, out_dim, rng);
  b2_ = Tensor({out_dim}, rng.uniform_vector(out_dim, -0.1, 0.1));
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ContractError("PseudoTextEncoder: gain must be positive");
  if (gain != 1.0) {
    for (Tensor* t : {&w2_, &b2_}) {
      for (double& v : t->mutable_values()) v *= gain;
    }
  }
}

Tensor PseudoTextEncoder::encode_rows(const Tensor& rows) const {
  if (rows.rank() != 2 || rows.cols() != token_dim_) {
    throw DimensionError("PseudoTextEncoder: input " + shape_to_string(rows.shape()) + " does not have width " +
                         std::to_string(token_dim_));
  }
  return linear(tanh(linear(rows, w1_, b1_)), w2_, b2_);
}

std::vector<double> PseudoTextEncoder::weight_snapshot() const {
  std::vector<double> out;
  for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_}) out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

Tensor encode_sequence(const PseudoTextEncoder& encoder, const std::vector<Tensor>& sequence) {
  if (sequence.empty()) throw EmptyInputError("encode_sequence: empty sequence");
  const Tensor pooled = row_mean(concat_rows(sequence));
  return reshape(encoder.encode_rows(reshape(pooled, {1, pooled.numel()})), {encoder.out_dim()});
}

Tensor build_hard_prompts(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                          const PseudoTextEncoder& encoder, std::string_view prompt_template) {
  constexpr std::string_view kSlot = "[CLS]";
  const auto slot = prompt_template.find(kSlot);
  if (slot == std::string_view::npos) throw ContractError("build_hard_prompts: template lacks a [CLS] slot");
  const auto prefix = tokenize_lenient(prompt_template.substr(0, slot));
  const auto suffix = tokenize_lenient(prompt_template.substr(slot + kSlot.size()));

  std::vector<Tensor> pooled;
  pooled.reserve(vocab.size());
  for (const auto& name : name_tokens(vocab)) {
    std::vector<std::string> tokens = prefix;
    tokens.insert(tokens.end(), name.begin(), name.end());
    tokens.insert(tokens.end(), suffix.begin(), suffix.end());
    pooled.push_back(row_mean(table.embed_all(tokens)));
  }
  return encoder.encode_rows(concat_rows(pooled)).detach();
}

Tensor build_name_embeddings(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                             const PseudoTextEncoder& encoder) {
  std::vector<Tensor> pooled;
  pooled.reserve(vocab.size());
  for (const auto& name : name_tokens(vocab)) pooled.push_back(row_mean(table.embed_all(name)));
  return encoder.encode_rows(concat_rows(pooled)).detach();
}

SoftPromptBank SoftPromptBank::create(const std::string& prefix, std::size_t count, std::size_t token_dim, Rng& rng,
                                      ParameterSet& params) {
  SoftPromptBank bank;
  for (std::size_t l = 0; l < count; ++l) {
    bank.tokens.push_back(
        params.add(prefix + "." + std::to_string(l), Tensor({token_dim}, rng.normal_vector(token_dim, 0.0, 0.02), true)));
  }
  return bank;
}

Tensor SoftPromptBank::stacked() const { return tokens.empty() ? Tensor() : concat_rows(tokens); }

std::vector<Tensor> label_word_embeddings(const LabelVocabulary& vocab, const TokenEmbeddingTable& table) {
  std::vector<Tensor> out;
  out.reserve(vocab.size());
  for (const auto& name : name_tokens(vocab)) out.push_back(table.embed_all(name));
  return out;
}

Tensor build_soft_prompts(const std::vector<Tensor>& label_words, const PseudoTextEncoder& encoder,
                          const Tensor& prompts) {
  if (label_words.empty()) throw EmptyInputError("build_soft_prompts: no labels");
  if (prompts.defined() && (prompts.rank() != 2 || prompts.cols() != encoder.token_dim())) {
    throw DimensionError("build_soft_prompts: prompts " + shape_to_string(prompts.shape()) +
                         " do not have token width " + std::to_string(encoder.token_dim()));
  }
  std::vector<Tensor> pooled;
  pooled.reserve(label_words.size());
  for (const auto& words : label_words) {
    pooled.push_back(row_mean(prompts.defined() && prompts.rows() > 0 ? concat_rows({prompts, words}) : words));
  }
  return encoder.encode_rows(concat_rows(pooled));
}

Tensor build_soft_prompts(const LabelVocabulary& vocab, const TokenEmbeddingTable& table,
                          const PseudoTextEncoder& encoder, const Tensor& prompts) {
  return build_soft_prompts(label_word_embeddings(vocab, table), encoder, prompts);
}

}  // namespace pvlr
