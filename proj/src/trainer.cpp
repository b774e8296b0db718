#include "pvlr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pvlr/errors.hpp"
#include "pvlr/objective.hpp"
#include "pvlr/random.hpp"

namespace pvlr {

using nlohmann::json;

std::vector<std::string> epoch_log_columns() {
  std::vector<std::string> cols = {"epoch", "loss"};
  const auto& m = MetricsReport::column_names();
  cols.insert(cols.end(), m.begin(), m.end());
  return cols;
}

std::string epoch_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  const auto cols = epoch_log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : log) {
    os << r.epoch << ',' << format_double(r.loss);
    for (double v : r.report.values()) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

LabelVocabulary vocabulary_for(const TrainConfig& config) {
  if (config.vocab_file.empty()) return LabelVocabulary::builtin(config.data.num_labels);
  LabelVocabulary vocab = LabelVocabulary::from_file(config.vocab_file);
  if (vocab.size() != config.data.num_labels) {
    throw ConfigError("vocab_file lists " + std::to_string(vocab.size()) + " labels, data.num_labels is " +
                      std::to_string(config.data.num_labels));
  }
  return vocab;
}

namespace {

std::shared_ptr<const TextWorld> make_text(const TrainConfig& config) {
  return std::make_shared<const TextWorld>(
      TextWorld::create(vocabulary_for(config), config.data.dim, config.data.text_seed, config.data.text_gain));
}

void copy_values(ParameterSet& dst, const std::vector<std::vector<double>>& src) {
  auto& items = dst.items();
  if (items.size() != src.size()) throw ContractError("parameter count mismatch");
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto v = items[k].tensor.mutable_values();
    if (v.size() != src[k].size()) throw ContractError("parameter size mismatch for '" + items[k].name + "'");
    std::copy(src[k].begin(), src[k].end(), v.begin());
  }
}

}  // namespace

Trainer::Trainer(TrainConfig config) : Trainer(config, nullptr) {}

Trainer::Trainer(TrainConfig config, std::shared_ptr<const SyntheticDataset> data) : config_(std::move(config)) {
  config_.validate();
  text_ = make_text(config_);
  data_ = data ? std::move(data) : std::make_shared<const SyntheticDataset>(make_dataset(config_.data, *text_));
  if (data_->train.size() == 0 || data_->test.size() == 0) throw ConfigError("dataset split is empty");
  head_ = std::make_unique<PvlrHead>(config_.head, *text_);
  adam_ = AdamState::zeros_like(head_->parameters());
  ema_ = EmaState::from(head_->parameters(), config_.ema_decay);
}

std::size_t Trainer::steps_per_epoch() const noexcept {
  const std::size_t n = data_->train.size();
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t step) const {
  const std::size_t spe = steps_per_epoch();
  const std::size_t epoch = step / spe;
  const std::size_t b = step % spe;
  const std::size_t n = data_->train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(config_.seed).fork(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::size_t begin = b * config_.batch_size;
  const std::size_t end = std::min(n, begin + config_.batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

Tensor Trainer::batch_loss(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw EmptyInputError("batch_loss: empty batch");
  const BatchContext ctx = head_->prepare();
  Tensor total;
  for (std::size_t i : indices) {
    const HeadOutput out = head_->forward(ctx, data_->train.features[i]);
    Tensor loss = asl_loss(out.probs, data_->train.targets[i], config_.loss);
    if (config_.use_kcr && out.has_kcr_pair()) loss = total_loss(loss, kcr_loss(out.t_ka, out.t_cap), config_.loss);
    total = total.defined() ? add(total, loss) : loss;
  }
  return affine(total, 1.0 / static_cast<double>(indices.size()));
}

double Trainer::train_step() {
  if (finished()) throw ContractError("train_step: training already finished");
  const auto t0 = std::chrono::steady_clock::now();
  auto& params = head_->parameters();
  params.zero_grad();
  Tensor loss;
  try {
    loss = batch_loss(batch_indices(step_));
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step_) + ": " + e.what());
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericError("step " + std::to_string(step_) + ": non-finite loss " + format_double(value));
  }
  if (loss.requires_grad()) loss.backward();
  for (const auto& p : params.items()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("step " + std::to_string(step_) + ": non-finite gradient in " + p.name);
    }
  }
  const double lr = cosine_lr(step_, total_steps(), config_.optim.lr_max, config_.optim.lr_min);
  adamw_step(params, adam_, lr, config_.optim);
  ema_update(ema_, params);
  ++step_;
  epoch_loss_sum_ += value;
  ++epoch_batches_;
  train_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++timed_steps_;
  if (step_ % steps_per_epoch() == 0) end_epoch();
  return value;
}

void Trainer::end_epoch() {
  EpochRecord rec;
  rec.epoch = step_ / steps_per_epoch();
  rec.loss = epoch_batches_ ? epoch_loss_sum_ / static_cast<double>(epoch_batches_) : 0.0;
  rec.report = evaluate();
  epoch_loss_sum_ = 0.0;
  epoch_batches_ = 0;
  log_.push_back(rec);
  if (on_epoch_) on_epoch_(rec);
}

void Trainer::run_steps(std::size_t count) {
  for (std::size_t k = 0; k < count && !finished(); ++k) train_step();
}

const std::vector<EpochRecord>& Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  if (on_epoch) on_epoch_ = on_epoch;
  while (!finished()) train_step();
  return log_;
}

const PvlrHead& Trainer::eval_head(bool use_ema) const {
  if (!use_ema) return *head_;
  if (!shadow_head_) shadow_head_ = std::make_unique<PvlrHead>(config_.head, *text_);
  copy_values(shadow_head_->parameters(), ema_.shadow);
  return *shadow_head_;
}

ScoreMatrix Trainer::score_split(const SyntheticSplit& split, bool use_ema) const {
  NoGradGuard guard;
  const PvlrHead& h = eval_head(use_ema);
  const BatchContext ctx = h.prepare();
  ScoreMatrix m(split.size(), config_.data.num_labels);
  m.class_names = text_->vocab.names();
  for (std::size_t i = 0; i < split.size(); ++i) {
    const HeadOutput out = h.forward(ctx, split.features[i]);
    m.set_row(i, out.probs.values(), split.targets[i]);
  }
  return m;
}

MetricsReport Trainer::evaluate(bool use_ema) const {
  return pvlr::evaluate(score_split(data_->test, use_ema), {config_.eval_threshold, config_.eval_top_k});
}

HeadOutput Trainer::inspect(const Tensor& x, bool use_ema) const {
  NoGradGuard guard;
  return eval_head(use_ema).forward(x);
}

TensorFile Trainer::checkpoint() const {
  TensorFile file;
  json log = json::array();
  for (const auto& r : log_) {
    log.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"metrics", r.report.values()},
                   {"skipped", r.report.skipped_classes}});
  }
  file.header_json = json{{"config", config_},
                          {"step", step_},
                          {"adam_step", adam_.step},
                          {"epoch_loss_sum", epoch_loss_sum_},
                          {"epoch_batches", epoch_batches_},
                          {"log", log}}
                         .dump();
  const auto& items = head_->parameters().items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& p = items[k];
    const auto v = p.tensor.values();
    file.tensors.push_back({"live." + p.name, p.tensor.shape(), {v.begin(), v.end()}});
  }
  for (std::size_t k = 0; k < items.size(); ++k) file.tensors.push_back({"ema." + items[k].name, items[k].tensor.shape(), ema_.shadow[k]});
  for (std::size_t k = 0; k < items.size(); ++k) file.tensors.push_back({"adam_m." + items[k].name, items[k].tensor.shape(), adam_.m[k]});
  for (std::size_t k = 0; k < items.size(); ++k) file.tensors.push_back({"adam_v." + items[k].name, items[k].tensor.shape(), adam_.v[k]});
  return file;
}

void Trainer::restore(const TensorFile& file) {
  json header;
  try {
    header = json::parse(file.header_json);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), e.byte);
  }
  try {
    if (json(config_) != header.at("config")) throw FormatError("checkpoint was written under a different config", 0);
    step_ = header.at("step").get<std::size_t>();
    adam_.step = header.at("adam_step").get<std::size_t>();
    epoch_loss_sum_ = header.at("epoch_loss_sum").get<double>();
    epoch_batches_ = header.at("epoch_batches").get<std::size_t>();
    log_.clear();
    for (const auto& r : header.at("log")) {
      EpochRecord rec;
      rec.epoch = r.at("epoch").get<std::size_t>();
      rec.loss = r.at("loss").get<double>();
      const auto v = r.at("metrics").get<std::vector<double>>();
      if (v.size() != MetricsReport::column_names().size()) throw FormatError("checkpoint log row width", 0);
      auto& m = rec.report;
      double* fields[] = {&m.map,     &m.cp,      &m.cr,       &m.cf1,     &m.op,      &m.or_,     &m.of1,
                          &m.map_top3, &m.cp_top3, &m.cr_top3, &m.cf1_top3, &m.op_top3, &m.or_top3, &m.of1_top3};
      for (std::size_t i = 0; i < v.size(); ++i) *fields[i] = v[i];
      m.skipped_classes = r.at("skipped").get<std::size_t>();
      log_.push_back(rec);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), 0);
  }
  if (step_ > total_steps()) throw FormatError("checkpoint step exceeds the configured schedule", 0);
  auto& items = head_->parameters().items();
  auto load = [&](const std::string& prefix, const Parameter& p) -> const std::vector<double>& {
    const NamedBlob& blob = file.find(prefix + p.name);
    if (blob.shape != p.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + blob.name + "' has shape " + shape_to_string(blob.shape) +
                            ", expected " + shape_to_string(p.tensor.shape()),
                        0);
    }
    return blob.values;
  };
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& v = load("live.", items[k]);
    auto dst = items[k].tensor.mutable_values();
    std::copy(v.begin(), v.end(), dst.begin());
    ema_.shadow[k] = load("ema.", items[k]);
    adam_.m[k] = load("adam_m.", items[k]);
    adam_.v[k] = load("adam_v.", items[k]);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { write_tensor_file(path, checkpoint()); }

Trainer Trainer::load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  json header;
  try {
    header = json::parse(file.header_json);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), e.byte);
  }
  if (!header.contains("config")) throw FormatError("checkpoint header lacks a config", 0);
  Trainer t(config_from_json(header.at("config")));
  t.restore(file);
  return t;
}

}  // namespace pvlr
