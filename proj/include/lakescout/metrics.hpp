#pragma once

#include "error.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace lakescout {

using GoldSets = std::map<std::string, std::set<std::string>>;

enum class Averaging { Micro, Macro };

struct BinaryMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t queries = 0;
};

inline double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Micro: pooled TP/FP/FN over every (query, table) decision. Macro: per-query P/R/F1 averaged,
// where an empty prediction set has precision 0 and an empty gold set recall 0.
inline BinaryMetrics compute_binary_metrics(const GoldSets& predicted, const GoldSets& gold,
                                            Averaging averaging = Averaging::Micro) {
  BinaryMetrics m;
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (const auto& [q, pred] : predicted) {
    auto it = gold.find(q);
    if (it == gold.end()) throw ValidationError("no gold set for query '" + q + "'");
    std::size_t tp = 0;
    for (const auto& t : pred) tp += it->second.count(t);
    const std::size_t fp = pred.size() - tp, fn = it->second.size() - tp;
    m.tp += tp;
    m.fp += fp;
    m.fn += fn;
    const double p = pred.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred.size());
    const double r = it->second.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(it->second.size());
    sp += p;
    sr += r;
    sf += harmonic_f1(p, r);
    ++m.queries;
  }
  if (averaging == Averaging::Micro) {
    m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = harmonic_f1(m.precision, m.recall);
  } else if (m.queries > 0) {
    const double n = static_cast<double>(m.queries);
    m.precision = sp / n;
    m.recall = sr / n;
    m.f1 = sf / n;
  }
  return m;
}

struct RankedMetrics {
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t queries = 0;  // queries with nonempty gold
};

// P@k = |top-k ∩ gold| / k and R@k = |top-k ∩ gold| / |gold|, averaged over queries with a
// nonempty gold set. Lists shorter than k count what they have.
inline std::vector<RankedMetrics> compute_ranked_metrics(const std::map<std::string, std::vector<std::string>>& ranked,
                                                         const GoldSets& gold, const std::vector<std::size_t>& ks) {
  std::vector<RankedMetrics> out;
  for (std::size_t k : ks) {
    if (k == 0) throw ValidationError("k must be at least 1");
    RankedMetrics m;
    m.k = k;
    for (const auto& [q, list] : ranked) {
      auto it = gold.find(q);
      if (it == gold.end()) throw ValidationError("no gold set for query '" + q + "'");
      if (it->second.empty()) continue;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < std::min(k, list.size()); ++i) hits += it->second.count(list[i]);
      m.precision += static_cast<double>(hits) / static_cast<double>(k);
      m.recall += static_cast<double>(hits) / static_cast<double>(it->second.size());
      ++m.queries;
    }
    if (m.queries > 0) {
      m.precision /= static_cast<double>(m.queries);
      m.recall /= static_cast<double>(m.queries);
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace lakescout
