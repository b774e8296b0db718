#include "pvlr/experiments.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "pvlr/errors.hpp"
#include "pvlr/random.hpp"
#include "pvlr/trainer.hpp"

namespace pvlr {

namespace {

void no_dma(TrainConfig& c) {
  c.head.use_v2s = false;
  c.head.use_s2v = false;
}

void no_ifm(TrainConfig& c) {
  c.head.use_channel_interaction = false;
  c.head.use_relation_aggregation = false;
}

void full(TrainConfig& c) { c.head.head_mode = HeadMode::pvlr; }

Variant make(std::string name, std::function<void(TrainConfig&)> f) { return {std::move(name), std::move(f)}; }

}  // namespace

std::vector<std::string> ablation_groups() { return {"ladder", "centers", "directions", "routes", "kcr_interaction", "prompting"}; }

std::vector<Variant> ablation_variants(const std::string& group) {
  if (group == "ladder") {
    return {
        make("baseline", [](TrainConfig& c) { c.head.head_mode = HeadMode::label_rep; }),
        make("kap",
             [](TrainConfig& c) {
               c.head.use_cap = false;
               no_ifm(c);
               no_dma(c);
             }),
        make("kap_cap",
             [](TrainConfig& c) {
               no_ifm(c);
               no_dma(c);
             }),
        make("kap_cap_ifm", [](TrainConfig& c) { no_dma(c); }),
        make("full", full),
    };
  }
  if (group == "centers") {
    return {
        make("classifier_learning", [](TrainConfig& c) { c.head.head_mode = HeadMode::classifier_learning; }),
        make("baseline", [](TrainConfig& c) { c.head.head_mode = HeadMode::label_rep; }),
        make("label_rep_dma", [](TrainConfig& c) { c.head.head_mode = HeadMode::label_rep_dma; }),
        make("full", full),
    };
  }
  if (group == "directions") {
    return {
        make("kap_cap_ifm", [](TrainConfig& c) { no_dma(c); }),
        make("v2s_only", [](TrainConfig& c) { c.head.use_s2v = false; }),
        make("s2v_only", [](TrainConfig& c) { c.head.use_v2s = false; }),
        make("full", full),
    };
  }
  if (group == "routes") {
    return {
        make("no_visual_route",
             [](TrainConfig& c) {
               c.head.use_context_attention = false;
               no_dma(c);
             }),
        make("implicit_only", [](TrainConfig& c) { no_dma(c); }),
        make("explicit_only", [](TrainConfig& c) { c.head.use_context_attention = false; }),
        make("full", full),
    };
  }
  if (group == "kcr_interaction") {
    return {
        make("no_kcr_no_interaction",
             [](TrainConfig& c) {
               c.use_kcr = false;
               c.head.use_channel_interaction = false;
             }),
        make("no_kcr", [](TrainConfig& c) { c.use_kcr = false; }),
        make("no_interaction", [](TrainConfig& c) { c.head.use_channel_interaction = false; }),
        make("full", full),
    };
  }
  if (group == "prompting") {
    return {
        make("pre_interaction", [](TrainConfig& c) { c.head.prompting_mode = PromptingMode::pre; }),
        make("full", full),
    };
  }
  if (group == "all") {
    std::vector<Variant> out;
    std::set<std::string> seen;
    for (const auto& g : ablation_groups()) {
      for (auto& v : ablation_variants(g)) {
        if (seen.insert(v.name).second) out.push_back(std::move(v));
      }
    }
    return out;
  }
  throw ConfigError("unknown ablation group '" + group + "'");
}

RunResult run_single(const TrainConfig& config, const std::string& name, std::size_t max_steps) {
  RunResult r;
  r.variant = name;
  r.seed = config.seed;
  r.lambda = config.loss.lambda_kcr;
  Trainer trainer(config);
  if (max_steps > 0) {
    trainer.run_steps(max_steps);
  } else {
    trainer.train();
  }
  r.report = trainer.log().empty() || !trainer.finished() ? trainer.evaluate() : trainer.log().back().report;
  r.seconds_per_batch = trainer.seconds_per_batch();
  r.train_seconds = trainer.train_seconds();
  return r;
}

std::vector<RunResult> run_variants(const TrainConfig& base, const std::vector<Variant>& variants,
                                    const SweepOptions& options) {
  if (options.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::vector<RunResult> out;
  for (std::uint64_t seed : options.seeds) {
    for (const auto& v : variants) {
      TrainConfig c = base;
      c.reseed(seed);
      v.apply(c);
      RunResult r;
      try {
        c.validate();
        r = run_single(c, v.name, options.max_steps);
      } catch (const std::exception& e) {
        r.variant = v.name;
        r.seed = seed;
        r.lambda = c.loss.lambda_kcr;
        r.error = e.what();
      }
      if (options.progress) {
        auto& os = *options.progress;
        os << v.name << " seed=" << seed;
        if (r.error.empty()) {
          os << " map=" << format_double(r.report.map) << " sec/batch=" << r.seconds_per_batch;
        } else {
          os << " FAILED: " << r.error;
        }
        os << std::endl;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunResult> run_ablation(const TrainConfig& base, const std::vector<std::string>& groups,
                                    const SweepOptions& options) {
  std::vector<Variant> variants;
  std::set<std::string> seen;
  for (const auto& g : groups) {
    for (auto& v : ablation_variants(g)) {
      if (seen.insert(v.name).second) variants.push_back(std::move(v));
    }
  }
  return run_variants(base, variants, options);
}

std::vector<RunResult> sweep_lambda(const TrainConfig& base, const std::vector<double>& lambdas,
                                    const SweepOptions& options) {
  if (lambdas.empty()) throw ConfigError("sweep_lambda needs at least one value");
  std::vector<Variant> variants;
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw ConfigError("sweep_lambda values must be >= 0");
    variants.push_back(make("lambda=" + format_double(l), [l](TrainConfig& c) { c.loss.lambda_kcr = l; }));
  }
  return run_variants(base, variants, options);
}

std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunResult*>> by_variant;
  for (const auto& r : runs) {
    if (!r.error.empty()) continue;
    if (!by_variant.count(r.variant)) order.push_back(r.variant);
    by_variant[r.variant].push_back(&r);
  }
  std::vector<std::string> metrics = MetricsReport::column_names();
  metrics.push_back("sec_per_batch");
  std::vector<SummaryRow> rows;
  for (const auto& name : order) {
    const auto& group = by_variant[name];
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      std::vector<double> xs;
      for (const auto* r : group) xs.push_back(m < 14 ? r->report.values()[m] : r->seconds_per_batch);
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
      rows.push_back({name, group.front()->lambda, metrics[m], mean, sd, xs.size()});
    }
  }
  return rows;
}

double summary_mean(const std::vector<SummaryRow>& rows, const std::string& variant, const std::string& metric) {
  for (const auto& r : rows) {
    if (r.variant == variant && r.metric == metric) return r.mean;
  }
  throw ContractError("summary has no row for " + variant + "/" + metric);
}

void write_runs_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "variant,seed,lambda";
  for (const auto& c : MetricsReport::column_names()) out << ',' << c;
  out << ",sec_per_batch,train_seconds,error\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.seed << ',' << format_double(r.lambda);
    for (double v : r.report.values()) out << ',' << (r.error.empty() ? format_double(v) : "");
    std::string err = r.error;
    for (auto& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out << ',' << format_double(r.seconds_per_batch) << ',' << format_double(r.train_seconds) << ',' << err << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "variant,lambda,metric,mean,std,runs\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << format_double(r.lambda) << ',' << r.metric << ',' << format_double(r.mean) << ','
        << format_double(r.std) << ',' << r.runs << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TrainConfig gradcheck_config() {
  TrainConfig c;
  c.data.num_labels = c.head.num_labels = 4;
  c.data.dim = c.head.dim = 8;
  c.data.num_tokens = c.head.num_tokens = 4;
  c.head.prompt_len = 2;
  c.data.num_scenes = 2;
  c.data.core_labels = 2;
  c.data.train_size = 8;
  c.data.test_size = 4;
  c.batch_size = 4;
  c.epochs = 1;
  return c;
}

std::vector<HeadGradCheck> gradcheck_heads(const TrainConfig& config, std::size_t samples, double jitter,
                                           const GradCheckOptions& options) {
  const std::vector<std::pair<std::string, std::function<void(TrainConfig&)>>> variants = {
      {"pvlr", [](TrainConfig&) {}},
      {"pvlr_pre", [](TrainConfig& c) { c.head.prompting_mode = PromptingMode::pre; }},
      {"classifier_learning", [](TrainConfig& c) { c.head.head_mode = HeadMode::classifier_learning; }},
      {"label_rep", [](TrainConfig& c) { c.head.head_mode = HeadMode::label_rep; }},
      {"label_rep_dma", [](TrainConfig& c) { c.head.head_mode = HeadMode::label_rep_dma; }},
  };
  std::vector<HeadGradCheck> out;
  for (const auto& [name, apply] : variants) {
    TrainConfig c = config;
    apply(c);
    Trainer trainer(c);
    Rng rng = Rng(c.head.init_seed).fork(hash_string(name));
    for (auto& p : trainer.head().parameters().items()) {
      for (auto& v : p.tensor.mutable_values()) v += rng.normal(0.0, jitter);
    }
    std::vector<std::size_t> idx(std::min(samples, trainer.data().train.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto t0 = std::chrono::steady_clock::now();
    HeadGradCheck r;
    r.variant = name;
    r.report = finite_diff_check([&] { return trainer.batch_loss(idx); }, trainer.head().parameters().items(), options);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pvlr
