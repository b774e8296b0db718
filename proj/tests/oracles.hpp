#pragma once

// Brute-force reference implementations of the evaluation metrics. These
// avoid sorting: rank is counted directly from the tie rule.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pvlr/metrics.hpp"

namespace pvlr::oracle {

/// 1-based rank of item i: items scoring higher, or equal with a lower index, come first.
inline std::size_t rank_of(const std::vector<double>& s, std::size_t i) {
  std::size_t r = 1;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] > s[i] || (s[k] == s[i] && k < i)) ++r;
  }
  return r;
}

inline std::optional<double> average_precision(const std::vector<double>& s, const std::vector<double>& t) {
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (t[i] != 1.0) continue;
    ++positives;
    const std::size_t r = rank_of(s, i);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < s.size(); ++k) hits += t[k] == 1.0 && rank_of(s, k) <= r;
    total += static_cast<double>(hits) / static_cast<double>(r);
  }
  if (positives == 0) return std::nullopt;
  return total / static_cast<double>(positives);
}

inline double mean_ap(const ScoreMatrix& m) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    if (auto ap = average_precision(m.class_scores(j), m.class_targets(j))) {
      total += *ap;
      ++used;
    }
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

inline bool predicted_threshold(const ScoreMatrix& m, std::size_t i, std::size_t j, double thr) {
  return m.score(i, j) >= thr;
}

inline bool predicted_topk(const ScoreMatrix& m, std::size_t i, std::size_t j, std::size_t k) {
  std::vector<double> row(m.classes());
  for (std::size_t c = 0; c < m.classes(); ++c) row[c] = m.score(i, c);
  return rank_of(row, j) <= k;
}

struct Prf6 {
  double cp, cr, cf1, op, or_, of1;
};

template <typename Pred>
Prf6 prf(const ScoreMatrix& m, Pred pred) {
  auto f1 = [](double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };
  double cp = 0.0, cr = 0.0, tp_all = 0.0, pred_all = 0.0, pos_all = 0.0;
  for (std::size_t j = 0; j < m.classes(); ++j) {
    double tp = 0.0, np = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < m.samples(); ++i) {
      const bool p = pred(i, j);
      const bool t = m.target(i, j) == 1.0;
      if (p && t) tp += 1.0;
      if (p) np += 1.0;
      if (t) pos += 1.0;
    }
    cp += np > 0.0 ? tp / np : 0.0;
    cr += pos > 0.0 ? tp / pos : 0.0;
    tp_all += tp;
    pred_all += np;
    pos_all += pos;
  }
  const double c = static_cast<double>(m.classes());
  Prf6 out{};
  out.cp = cp / c;
  out.cr = cr / c;
  out.cf1 = f1(out.cp, out.cr);
  out.op = pred_all > 0.0 ? tp_all / pred_all : 0.0;
  out.or_ = pos_all > 0.0 ? tp_all / pos_all : 0.0;
  out.of1 = f1(out.op, out.or_);
  return out;
}

/// Random N×C instance; scores on a coarse grid sometimes so ties occur.
template <typename R>
ScoreMatrix random_instance(R& rng) {
  const std::size_t n = 1 + rng.index(8), c = 1 + rng.index(4);
  const bool coarse = rng.bernoulli(0.5);
  std::vector<double> s(n * c), t(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    s[i] = coarse ? static_cast<double>(1 + rng.index(4)) / 5.0 : rng.uniform(0.0, 1.0);
    t[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  return ScoreMatrix(n, c, std::move(s), std::move(t));
}

}  // namespace pvlr::oracle
