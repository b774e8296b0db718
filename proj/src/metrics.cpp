#include "pvlr/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pvlr/errors.hpp"

namespace pvlr {

ScoreMatrix::ScoreMatrix(std::size_t samples, std::size_t classes)
    : samples_(samples), classes_(classes), scores_(samples * classes, 0.0), targets_(samples * classes, 0.0) {}

ScoreMatrix::ScoreMatrix(std::size_t samples, std::size_t classes, std::vector<double> scores,
                         std::vector<double> targets)
    : samples_(samples), classes_(classes), scores_(std::move(scores)), targets_(std::move(targets)) {
  if (scores_.size() != samples * classes || targets_.size() != samples * classes) {
    throw DimensionError("ScoreMatrix: expected " + std::to_string(samples) + "x" + std::to_string(classes) +
                         " scores and targets");
  }
  for (double t : targets_) {
    if (t != 0.0 && t != 1.0) throw LabelError("ScoreMatrix: targets must be 0 or 1");
  }
}

void ScoreMatrix::set_row(std::size_t i, std::span<const double> scores, std::span<const double> targets) {
  if (i >= samples_) throw DimensionError("ScoreMatrix::set_row: row out of range");
  if (scores.size() != classes_ || targets.size() != classes_) throw DimensionError("ScoreMatrix::set_row: width");
  for (std::size_t j = 0; j < classes_; ++j) {
    if (targets[j] != 0.0 && targets[j] != 1.0) throw LabelError("ScoreMatrix: targets must be 0 or 1");
    scores_[i * classes_ + j] = scores[j];
    targets_[i * classes_ + j] = targets[j];
  }
}

std::vector<double> ScoreMatrix::class_scores(std::size_t j) const {
  std::vector<double> out(samples_);
  for (std::size_t i = 0; i < samples_; ++i) out[i] = score(i, j);
  return out;
}

std::vector<double> ScoreMatrix::class_targets(std::size_t j) const {
  std::vector<double> out(samples_);
  for (std::size_t i = 0; i < samples_; ++i) out[i] = target(i, j);
  return out;
}

std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size()) throw DimensionError("average_precision: length mismatch");
  const auto order = ranking(scores);
  double hits = 0.0, total = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (targets[order[r]] == 1.0) {
      hits += 1.0;
      total += hits / static_cast<double>(r + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return total / hits;
}

double harmonic_f1(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

std::vector<bool> threshold_predictions(const ScoreMatrix& m, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("threshold must lie in (0,1)");
  std::vector<bool> out(m.samples() * m.classes());
  for (std::size_t i = 0; i < m.samples(); ++i) {
    for (std::size_t j = 0; j < m.classes(); ++j) out[i * m.classes() + j] = m.score(i, j) >= threshold;
  }
  return out;
}

std::vector<bool> topk_predictions(const ScoreMatrix& m, std::size_t k) {
  if (k < 1 || k > m.classes()) {
    throw ContractError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(m.classes()) + "]");
  }
  std::vector<bool> out(m.samples() * m.classes(), false);
  const auto& s = m.scores();
  for (std::size_t i = 0; i < m.samples(); ++i) {
    const auto order = ranking(std::span<const double>(s).subspan(i * m.classes(), m.classes()));
    for (std::size_t r = 0; r < k; ++r) out[i * m.classes() + order[r]] = true;
  }
  return out;
}

PrfTriple class_prf(const ScoreMatrix& m, const std::vector<bool>& predicted) {
  if (predicted.size() != m.samples() * m.classes()) throw DimensionError("class_prf: prediction mask size");
  if (m.classes() == 0) return {};
  double p_sum = 0.0, r_sum = 0.0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    double tp = 0.0, pred = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < m.samples(); ++i) {
      const bool p = predicted[i * m.classes() + j];
      const bool t = m.target(i, j) == 1.0;
      tp += p && t;
      pred += p;
      pos += t;
    }
    p_sum += pred > 0.0 ? tp / pred : 0.0;
    r_sum += pos > 0.0 ? tp / pos : 0.0;
  }
  PrfTriple out;
  out.precision = p_sum / static_cast<double>(m.classes());
  out.recall = r_sum / static_cast<double>(m.classes());
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

PrfTriple overall_prf(const ScoreMatrix& m, const std::vector<bool>& predicted) {
  if (predicted.size() != m.samples() * m.classes()) throw DimensionError("overall_prf: prediction mask size");
  double tp = 0.0, pred = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < m.samples(); ++i) {
    for (std::size_t j = 0; j < m.classes(); ++j) {
      const bool p = predicted[i * m.classes() + j];
      const bool t = m.target(i, j) == 1.0;
      tp += p && t;
      pred += p;
      pos += t;
    }
  }
  PrfTriple out;
  out.precision = pred > 0.0 ? tp / pred : 0.0;
  out.recall = pos > 0.0 ? tp / pos : 0.0;
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

PrfTriple class_prf(const ScoreMatrix& m, double threshold) { return class_prf(m, threshold_predictions(m, threshold)); }

PrfTriple overall_prf(const ScoreMatrix& m, double threshold) {
  return overall_prf(m, threshold_predictions(m, threshold));
}

TopkPrf topk_prf(const ScoreMatrix& m, std::size_t k) {
  const auto mask = topk_predictions(m, k);
  return {class_prf(m, mask), overall_prf(m, mask)};
}

MeanAp mean_average_precision(const ScoreMatrix& m) {
  MeanAp out;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    const auto ap = average_precision(m.class_scores(j), m.class_targets(j));
    if (!ap) {
      ++out.skipped_classes;
      continue;
    }
    total += *ap;
    ++used;
  }
  out.value = used > 0 ? total / static_cast<double>(used) : 0.0;
  return out;
}

const std::vector<std::string>& MetricsReport::column_names() {
  static const std::vector<std::string> names = {"map",      "cp",      "cr",      "cf1",      "op",
                                                 "or",       "of1",     "map_top3", "cp_top3", "cr_top3",
                                                 "cf1_top3", "op_top3", "or_top3", "of1_top3"};
  return names;
}

std::vector<double> MetricsReport::values() const {
  return {map, cp, cr, cf1, op, or_, of1, map_top3, cp_top3, cr_top3, cf1_top3, op_top3, or_top3, of1_top3};
}

MetricsReport evaluate(const ScoreMatrix& m, const EvalOptions& options) {
  MetricsReport r;
  const MeanAp ap = mean_average_precision(m);
  r.map = ap.value;
  r.map_top3 = ap.value;
  r.skipped_classes = ap.skipped_classes;
  const auto mask = threshold_predictions(m, options.threshold);
  const PrfTriple c = class_prf(m, mask), o = overall_prf(m, mask);
  r.cp = c.precision;
  r.cr = c.recall;
  r.cf1 = c.f1;
  r.op = o.precision;
  r.or_ = o.recall;
  r.of1 = o.f1;
  const TopkPrf top = topk_prf(m, std::min(options.top_k, m.classes()));
  r.cp_top3 = top.classwise.precision;
  r.cr_top3 = top.classwise.recall;
  r.cf1_top3 = top.classwise.f1;
  r.op_top3 = top.overall.precision;
  r.or_top3 = top.overall.recall;
  r.of1_top3 = top.overall.f1;
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<std::vector<double>> read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row", 0);
  const auto names = split_csv_line(line);
  offset += line.size() + 1;
  if (header) *header = names;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") {
      offset += line.size() + 1;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw FormatError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " +
                            std::to_string(cells.size()) + " cells, header has " + std::to_string(names.size()),
                        offset);
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw FormatError(path.string() + ": not a number: '" + c + "'", offset);
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return rows;
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      std::span<const double> values, std::size_t columns) {
  if (columns == 0 || header.size() != columns || values.size() % columns != 0) {
    throw DimensionError("write_matrix_csv: header and values disagree on width");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < columns; ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < values.size(); i += columns) {
    for (std::size_t j = 0; j < columns; ++j) out << (j ? "," : "") << format_double(values[i + j]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ScoreMatrix read_score_matrix(const std::filesystem::path& scores, const std::filesystem::path& targets) {
  std::vector<std::string> names, target_names;
  const auto s = read_matrix_csv(scores, &names);
  const auto t = read_matrix_csv(targets, &target_names);
  if (names != target_names) throw FormatError("score and target CSV headers differ", 0);
  if (s.size() != t.size()) throw FormatError("score and target CSVs have different row counts", 0);
  std::vector<double> sv, tv;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sv.insert(sv.end(), s[i].begin(), s[i].end());
    tv.insert(tv.end(), t[i].begin(), t[i].end());
  }
  ScoreMatrix m(s.size(), names.size(), std::move(sv), std::move(tv));
  m.class_names = names;
  return m;
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
  const auto v = report.values();
  write_matrix_csv(path, MetricsReport::column_names(), v, v.size());
}

}  // namespace pvlr
