#include "pvlr/config.hpp"

#include <fstream>
#include <sstream>

#include "pvlr/errors.hpp"

namespace pvlr {

using nlohmann::json;

void TrainConfig::validate() const {
  data.validate();
  head.validate();
  loss.validate();
  if (head.num_labels != data.num_labels || head.dim != data.dim || head.num_tokens != data.num_tokens) {
    throw ConfigError("head.num_labels/dim/num_tokens must equal data.num_labels/dim/num_tokens");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(optim.lr_max > 0.0) || !(optim.lr_min >= 0.0) || optim.lr_min > optim.lr_max) {
    throw ConfigError("learning rates need 0 <= lr_min <= lr_max, lr_max > 0");
  }
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("optim betas must lie in [0,1)");
  }
  if (!(optim.eps > 0.0) || !(optim.weight_decay >= 0.0)) throw ConfigError("optim eps/weight_decay out of range");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must lie in [0,1]");
  if (!(eval_threshold > 0.0 && eval_threshold < 1.0)) throw ConfigError("eval_threshold must lie in (0,1)");
  if (eval_top_k == 0 || eval_top_k > data.num_labels) throw ConfigError("eval_top_k must lie in [1, C]");
}

void TrainConfig::reseed(std::uint64_t run_seed) {
  data.seed = run_seed;
  head.init_seed = run_seed;
  seed = run_seed;
}

void to_json(json& j, const TrainConfig& c) {
  const auto& d = c.data;
  const auto& h = c.head;
  j = json{
      {"data",
       {{"num_labels", d.num_labels},
        {"dim", d.dim},
        {"num_tokens", d.num_tokens},
        {"num_scenes", d.num_scenes},
        {"core_labels", d.core_labels},
        {"core_low", d.core_low},
        {"core_high", d.core_high},
        {"background_rate", d.background_rate},
        {"train_size", d.train_size},
        {"test_size", d.test_size},
        {"seed", d.seed},
        {"text_seed", d.text_seed},
        {"noise_sigma", d.noise_sigma},
        {"prototype_scale", d.prototype_scale},
        {"prototype_noise", d.prototype_noise},
        {"placements_per_label", d.placements_per_label},
        {"text_gain", d.text_gain},
        {"mixing_identity", d.mixing_identity}}},
      {"head",
       {{"num_labels", h.num_labels},
        {"dim", h.dim},
        {"num_tokens", h.num_tokens},
        {"prompt_len", h.prompt_len},
        {"use_kap", h.use_kap},
        {"use_cap", h.use_cap},
        {"use_channel_interaction", h.use_channel_interaction},
        {"use_relation_aggregation", h.use_relation_aggregation},
        {"use_v2s", h.use_v2s},
        {"use_s2v", h.use_s2v},
        {"use_context_attention", h.use_context_attention},
        {"residual", h.residual},
        {"dma_residual", h.dma_residual},
        {"prompting_mode", std::string(to_string(h.prompting_mode))},
        {"head_mode", std::string(to_string(h.head_mode))},
        {"init_seed", h.init_seed}}},
      {"loss",
       {{"gamma_pos", c.loss.gamma_pos},
        {"gamma_neg", c.loss.gamma_neg},
        {"lambda_kcr", c.loss.lambda_kcr},
        {"prob_clip_eps", c.loss.prob_clip_eps}}},
      {"optim",
       {{"lr_max", c.optim.lr_max},
        {"lr_min", c.optim.lr_min},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps},
        {"weight_decay", c.optim.weight_decay}}},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"ema_decay", c.ema_decay},
      {"seed", c.seed},
      {"use_kcr", c.use_kcr},
      {"eval_ema", c.eval_ema},
      {"eval_threshold", c.eval_threshold},
      {"eval_top_k", c.eval_top_k},
      {"vocab_file", c.vocab_file},
  };
}

void from_json(const json& src, TrainConfig& c) {
  json j;
  to_json(j, TrainConfig{});
  merge_strict(j, src);
  try {
    const auto& d = j.at("data");
    d.at("num_labels").get_to(c.data.num_labels);
    d.at("dim").get_to(c.data.dim);
    d.at("num_tokens").get_to(c.data.num_tokens);
    d.at("num_scenes").get_to(c.data.num_scenes);
    d.at("core_labels").get_to(c.data.core_labels);
    d.at("core_low").get_to(c.data.core_low);
    d.at("core_high").get_to(c.data.core_high);
    d.at("background_rate").get_to(c.data.background_rate);
    d.at("train_size").get_to(c.data.train_size);
    d.at("test_size").get_to(c.data.test_size);
    d.at("seed").get_to(c.data.seed);
    d.at("text_seed").get_to(c.data.text_seed);
    d.at("noise_sigma").get_to(c.data.noise_sigma);
    d.at("prototype_scale").get_to(c.data.prototype_scale);
    d.at("prototype_noise").get_to(c.data.prototype_noise);
    d.at("placements_per_label").get_to(c.data.placements_per_label);
    d.at("text_gain").get_to(c.data.text_gain);
    d.at("mixing_identity").get_to(c.data.mixing_identity);

    const auto& h = j.at("head");
    h.at("num_labels").get_to(c.head.num_labels);
    h.at("dim").get_to(c.head.dim);
    h.at("num_tokens").get_to(c.head.num_tokens);
    h.at("prompt_len").get_to(c.head.prompt_len);
    h.at("use_kap").get_to(c.head.use_kap);
    h.at("use_cap").get_to(c.head.use_cap);
    h.at("use_channel_interaction").get_to(c.head.use_channel_interaction);
    h.at("use_relation_aggregation").get_to(c.head.use_relation_aggregation);
    h.at("use_v2s").get_to(c.head.use_v2s);
    h.at("use_s2v").get_to(c.head.use_s2v);
    h.at("use_context_attention").get_to(c.head.use_context_attention);
    h.at("residual").get_to(c.head.residual);
    h.at("dma_residual").get_to(c.head.dma_residual);
    c.head.prompting_mode = parse_prompting_mode(h.at("prompting_mode").get<std::string>());
    c.head.head_mode = parse_head_mode(h.at("head_mode").get<std::string>());
    h.at("init_seed").get_to(c.head.init_seed);

    const auto& l = j.at("loss");
    l.at("gamma_pos").get_to(c.loss.gamma_pos);
    l.at("gamma_neg").get_to(c.loss.gamma_neg);
    l.at("lambda_kcr").get_to(c.loss.lambda_kcr);
    l.at("prob_clip_eps").get_to(c.loss.prob_clip_eps);

    const auto& o = j.at("optim");
    o.at("lr_max").get_to(c.optim.lr_max);
    o.at("lr_min").get_to(c.optim.lr_min);
    o.at("beta1").get_to(c.optim.beta1);
    o.at("beta2").get_to(c.optim.beta2);
    o.at("eps").get_to(c.optim.eps);
    o.at("weight_decay").get_to(c.optim.weight_decay);

    j.at("batch_size").get_to(c.batch_size);
    j.at("epochs").get_to(c.epochs);
    j.at("ema_decay").get_to(c.ema_decay);
    j.at("seed").get_to(c.seed);
    j.at("use_kcr").get_to(c.use_kcr);
    j.at("eval_ema").get_to(c.eval_ema);
    j.at("eval_threshold").get_to(c.eval_threshold);
    j.at("eval_top_k").get_to(c.eval_top_k);
    j.at("vocab_file").get_to(c.vocab_file);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config" + (where.empty() ? "" : " '" + where + "'") + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), path);
      continue;
    }
    const json& v = it.value();
    const bool compatible = (slot.is_number() && v.is_number()) || (slot.is_boolean() && v.is_boolean()) ||
                            (slot.is_string() && v.is_string());
    if (!compatible) throw ConfigError("config: '" + path + "' has the wrong type (" + v.type_name() + ")");
    if (slot.is_number_unsigned() && !(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))) {
      throw ConfigError("config: '" + path + "' must be a nonnegative integer");
    }
    if (slot.is_number_integer() && v.is_number_float()) {
      throw ConfigError("config: '" + path + "' must be an integer");
    }
    slot = slot.is_number_float() ? json(v.get<double>()) : v;
  }
}

namespace {

void collect_leaves(const json& j, const std::string& prefix, const std::string& leaf, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      collect_leaves(it.value(), path, leaf, out);
    } else if (it.key() == leaf) {
      out.push_back(path);
    }
  }
}

}  // namespace

void apply_override(json& config, const std::string& key, const std::string& value) {
  std::string path = key;
  if (key.find('.') == std::string::npos && !config.contains(key)) {
    std::vector<std::string> hits;
    collect_leaves(config, "", key, hits);
    if (hits.empty()) throw ConfigError("config: unknown key '" + key + "'");
    if (hits.size() > 1) {
      std::string all;
      for (const auto& h : hits) all += (all.empty() ? "" : ", ") + h;
      throw ConfigError("config: '" + key + "' is ambiguous (" + all + "); use the dotted path");
    }
    path = hits.front();
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded() || parsed.is_object() || parsed.is_array()) parsed = value;

  json patch = parsed;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::string part = path.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    patch = json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_strict(config, patch);
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  from_json(j, c);
  c.validate();
  return c;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

TrainConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

TrainConfig resolve_config(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  json j;
  to_json(j, TrainConfig{});
  if (!path.empty()) merge_strict(j, read_json_file(path));
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << json(c).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace pvlr
