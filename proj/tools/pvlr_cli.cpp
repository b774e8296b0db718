// Command-line front end: train, eval, gradcheck, ablate, sweep-lambda,
// export-maps and gen-data. Any config field can be set with --key value.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pvlr/checkpoint.hpp"
#include "pvlr/config.hpp"
#include "pvlr/errors.hpp"
#include "pvlr/experiments.hpp"
#include "pvlr/metrics.hpp"
#include "pvlr/trainer.hpp"

namespace fs = std::filesystem;
using namespace pvlr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override '" + a + "' needs a value");
      out.emplace_back(a.substr(2), extras[++i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void print_report(const MetricsReport& r) {
  const auto names = MetricsReport::column_names();
  const auto values = r.values();
  for (std::size_t i = 0; i < names.size(); ++i) std::printf("%-9s %.4f\n", names[i].c_str(), values[i]);
  if (r.skipped_classes) std::printf("skipped classes without positives: %zu\n", r.skipped_classes);
}

void write_map(const fs::path& path, const Tensor& map, const std::vector<std::string>& row_names,
               const std::vector<std::string>& col_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row";
  for (const auto& c : col_names) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < map.rows(); ++i) {
    out << row_names[i];
    for (std::size_t j = 0; j < map.cols(); ++j) out << ',' << format_double(map.at(i, j));
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> token_names(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back("token_" + std::to_string(i));
  return out;
}

struct Common {
  std::string config_path;
  std::vector<std::string> extras;
  TrainConfig resolve() const { return resolve_config(config_path, parse_overrides(extras)); }
};

int cmd_train(const Common& common, const std::string& out_dir, const std::string& resume, std::size_t stop_after,
              bool quiet) {
  ensure_dir(out_dir);
  Trainer trainer = resume.empty() ? Trainer(common.resolve()) : Trainer::load_checkpoint(resume);
  save_config(fs::path(out_dir) / "config.json", trainer.config());
  if (!quiet) {
    std::printf("params=%zu steps/epoch=%zu total_steps=%zu start_step=%zu\n",
                trainer.head().parameters().total_numel(), trainer.steps_per_epoch(), trainer.total_steps(),
                trainer.step());
  }
  trainer.set_epoch_callback([&](const EpochRecord& r) {
    if (!quiet) std::printf("epoch %zu loss %.6f map %.4f of1 %.4f\n", r.epoch, r.loss, r.report.map, r.report.of1);
    std::fflush(stdout);
  });
  if (stop_after > 0) {
    trainer.run_steps(stop_after);
  } else {
    trainer.train();
  }
  write_text(fs::path(out_dir) / "metrics.csv", epoch_log_csv(trainer.log()));
  trainer.save_checkpoint(fs::path(out_dir) / "checkpoint.pvlr");
  const MetricsReport final_report = trainer.evaluate();
  write_report_csv(fs::path(out_dir) / "report.csv", final_report);
  if (!quiet) {
    print_report(final_report);
    std::printf("sec/batch %.6f\n", trainer.seconds_per_batch());
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& scores, const std::string& targets,
             const std::string& out, bool live) {
  MetricsReport report;
  if (!checkpoint.empty()) {
    Trainer trainer = Trainer::load_checkpoint(checkpoint);
    report = trainer.evaluate(!live && trainer.config().eval_ema);
  } else {
    if (scores.empty() || targets.empty()) throw ConfigError("eval needs --checkpoint or both --scores and --targets");
    report = evaluate(read_score_matrix(scores, targets));
  }
  print_report(report);
  if (!out.empty()) write_report_csv(out, report);
  return kExitOk;
}

int cmd_gradcheck(const std::vector<std::string>& extras, std::size_t samples, double jitter,
                  const GradCheckOptions& options, double tolerance) {
  nlohmann::json j = gradcheck_config();
  for (const auto& [k, v] : parse_overrides(extras)) apply_override(j, k, v);
  const TrainConfig config = config_from_json(j);
  double worst = 0.0, seconds = 0.0;
  for (const auto& r : gradcheck_heads(config, samples, jitter, options)) {
    seconds += r.seconds;
    for (const auto& e : r.report.entries) {
      std::printf("%-20s %-22s n=%-5zu max_rel=%.3e  analytic=% .6e numeric=% .6e\n", r.variant.c_str(),
                  e.name.c_str(), e.numel, e.max_rel_error, e.analytic, e.numeric);
      worst = std::max(worst, e.max_rel_error);
    }
  }
  const bool ok = worst <= tolerance;
  std::printf("max relative error %.3e (tolerance %.1e) in %.2f s: %s\n", worst, tolerance, seconds,
              ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitFailure;
}

int finish_sweep(const std::vector<RunResult>& runs, const std::string& out_dir, const std::string& stem) {
  ensure_dir(out_dir);
  write_runs_csv(fs::path(out_dir) / (stem + "_runs.csv"), runs);
  const auto summary = summarize(runs);
  write_summary_csv(fs::path(out_dir) / (stem + "_summary.csv"), summary);
  std::printf("%-24s %8s %8s %12s\n", "variant", "map", "std", "sec/batch");
  for (const auto& row : summary) {
    if (row.metric != "map") continue;
    std::printf("%-24s %8.4f %8.4f %12.6f\n", row.variant.c_str(), row.mean, row.std,
                summary_mean(summary, row.variant, "sec_per_batch"));
  }
  std::size_t failed = 0;
  for (const auto& r : runs) failed += !r.error.empty();
  if (failed) std::printf("%zu cell(s) failed, see %s_runs.csv\n", failed, stem.c_str());
  return failed ? kExitFailure : kExitOk;
}

int cmd_export_maps(const std::string& checkpoint, std::size_t index, const std::string& out_dir, bool live) {
  Trainer trainer = Trainer::load_checkpoint(checkpoint);
  const auto& test = trainer.data().test;
  if (index >= test.size()) throw ConfigError("--index out of range for the test split");
  const HeadOutput out = trainer.inspect(test.features[index], !live && trainer.config().eval_ema);
  ensure_dir(out_dir);
  const auto labels = trainer.text().vocab.names();
  const auto tokens = token_names(trainer.config().data.num_tokens);
  const fs::path dir(out_dir);
  std::vector<std::string> written;
  auto emit = [&](const char* file, const Tensor& map, const std::vector<std::string>& rows,
                  const std::vector<std::string>& cols) {
    if (!map.defined()) return;
    write_map(dir / file, map, rows, cols);
    written.push_back(file);
  };
  emit("m_ka.csv", out.m_ka, labels, labels);
  emit("m_ca.csv", out.m_ca, labels, labels);
  emit("relation.csv", out.relation_map, labels, labels);
  emit("v2s.csv", out.v2s_map, labels, tokens);
  emit("s2v.csv", out.s2v_map, tokens, labels);
  {
    std::ofstream f(dir / "prediction.csv", std::ios::binary);
    if (!f) throw IoError("cannot write prediction.csv");
    f << "label,prob,target\n";
    for (std::size_t j = 0; j < labels.size(); ++j) {
      f << labels[j] << ',' << format_double(out.probs.at(j)) << ',' << test.targets[index][j] << '\n';
    }
    written.push_back("prediction.csv");
  }
  if (out.alpha) std::printf("alpha %.6f\n", *out.alpha);
  for (const auto& w : written) std::printf("wrote %s\n", (dir / w).string().c_str());
  return kExitOk;
}

void dump_split(const fs::path& dir, const std::string& stem, const SyntheticSplit& split, const TrainConfig& c,
                const std::vector<std::string>& labels) {
  const std::size_t n = split.size(), m = c.data.num_tokens, d = c.data.dim, k = c.data.num_labels;
  TensorFile file;
  file.header_json = nlohmann::json{{"split", stem}, {"config", c}}.dump();
  NamedBlob features{"features", {n, m, d}, {}};
  NamedBlob targets{"targets", {n, k}, {}};
  NamedBlob scenes{"scene_ids", {n}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = split.features[i].values();
    features.values.insert(features.values.end(), v.begin(), v.end());
    targets.values.insert(targets.values.end(), split.targets[i].begin(), split.targets[i].end());
    scenes.values.push_back(static_cast<double>(split.scene_ids[i]));
  }
  write_matrix_csv(dir / (stem + "_targets.csv"), labels, targets.values, k);
  file.tensors = {std::move(features), std::move(targets), std::move(scenes)};
  write_tensor_file(dir / (stem + ".pvlr"), file);
}

int cmd_gen_data(const Common& common, const std::string& out_dir) {
  const TrainConfig c = common.resolve();
  const auto vocab = vocabulary_for(c);
  const TextWorld text = TextWorld::create(vocab, c.data.dim, c.data.text_seed, c.data.text_gain);
  const SyntheticDataset data = make_dataset(c.data, text);
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  dump_split(dir, "train", data.train, c, vocab.names());
  dump_split(dir, "test", data.test, c, vocab.names());
  std::printf("wrote %zu train / %zu test samples to %s\n", data.train.size(), data.test.size(), out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompted vision-language multi-label head: training and evaluation tools"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir = "runs/train", ablate_out = "runs/ablate", sweep_out = "runs/sweep", maps_out = "runs/maps",
              gen_out = "runs/data", resume, checkpoint, scores, targets, report_out, groups = "ladder",
              seeds = "1,2,3,4,5", lambdas = "0.5,1,2,4,8";
  std::size_t stop_after = 0, samples = 2, index = 0, max_steps = 0;
  double tolerance = 1e-4, jitter = 0.2, step = 1e-3;
  bool quiet = false, live = false, two_point = false;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->allow_extras();
  };

  auto* train = app.add_subcommand("train", "Train one configuration");
  add_config(train);
  train->add_option("-o,--out", out_dir, "Output directory");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--stop-after", stop_after, "Stop after this many optimizer steps");
  train->add_flag("-q,--quiet", quiet);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or score/target CSVs");
  eval->add_option("--checkpoint", checkpoint);
  eval->add_option("--scores", scores);
  eval->add_option("--targets", targets);
  eval->add_option("-o,--out", report_out, "Report CSV");
  eval->add_flag("--live", live, "Use live instead of EMA weights");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
  grad->allow_extras();
  grad->add_option("--samples", samples, "Samples in the checked batch");
  grad->add_option("--tolerance", tolerance);
  grad->add_option("--step", step, "Relative finite-difference step");
  grad->add_option("--jitter", jitter, "Std of the noise added to every parameter before checking");
  grad->add_flag("--two-point", two_point, "Plain central difference instead of the five-point stencil");

  auto* ablate = app.add_subcommand("ablate", "Train ablation variants over seeds");
  add_config(ablate);
  ablate->add_option("-o,--out", ablate_out);
  ablate->add_option("--groups", groups, "Comma list: ladder,centers,directions,routes,kcr_interaction,prompting,all");
  ablate->add_option("--seeds", seeds);
  ablate->add_option("--max-steps", max_steps, "Steps per run (0: full schedule)");

  auto* sweep = app.add_subcommand("sweep-lambda", "Train over a grid of consistency weights");
  add_config(sweep);
  sweep->add_option("-o,--out", sweep_out);
  sweep->add_option("--values", lambdas);
  sweep->add_option("--seeds", seeds);
  sweep->add_option("--max-steps", max_steps);

  auto* maps = app.add_subcommand("export-maps", "Write attention maps of one test sample as CSV");
  maps->add_option("--checkpoint", checkpoint)->required();
  maps->add_option("--index", index);
  maps->add_option("-o,--out", maps_out);
  maps->add_flag("--live", live);

  auto* gen = app.add_subcommand("gen-data", "Generate and dump the synthetic dataset");
  add_config(gen);
  gen->add_option("-o,--out", gen_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    auto* sub = app.get_subcommands().front();
    common.extras = sub->remaining();
    if (sub == train) return cmd_train(common, out_dir, resume, stop_after, quiet);
    if (sub == eval) return cmd_eval(checkpoint, scores, targets, report_out, live);
    if (sub == grad) return cmd_gradcheck(common.extras, samples, jitter, {step, 1e-8, !two_point}, tolerance);
    if (sub == maps) return cmd_export_maps(checkpoint, index, maps_out, live);
    if (sub == gen) return cmd_gen_data(common, gen_out);
    SweepOptions options;
    options.seeds = parse_list<std::uint64_t>(seeds, "seed");
    options.max_steps = max_steps;
    options.progress = &std::cout;
    const TrainConfig base = common.resolve();
    if (sub == ablate) {
      return finish_sweep(run_ablation(base, parse_list<std::string>(groups, "group"), options), ablate_out, "ablation");
    }
    if (sub == sweep) {
      return finish_sweep(sweep_lambda(base, parse_list<double>(lambdas, "lambda"), options), sweep_out,
                          "sweep");
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
