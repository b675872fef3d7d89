#pragma once

// Test-side reference computations, written from the formulas directly and sharing no
// code paths with the library beyond its value types.

#include "lakescout.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using lakescout::Matrix;
using lakescout::Vector;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }
inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

inline Vector elu(const Vector& v) {
  Vector o(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) o(i) = elu(v(i));
  return o;
}

// Okapi BM25 with idf = ln((N - df + 0.5) / (df + 0.5) + 1).
inline double bm25(const std::vector<std::string>& query, const std::vector<std::string>& doc,
                   const std::vector<std::vector<std::string>>& corpus, double k1 = 1.2, double b = 0.75) {
  double avg = 0.0;
  for (const auto& d : corpus) avg += static_cast<double>(d.size());
  avg /= static_cast<double>(corpus.size());
  std::set<std::string> terms(query.begin(), query.end());
  double s = 0.0;
  for (const auto& term : terms) {
    double tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
    if (tf == 0.0) continue;
    double df = 0.0;
    for (const auto& d : corpus) df += std::find(d.begin(), d.end(), term) != d.end();
    const double n = static_cast<double>(corpus.size());
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * static_cast<double>(doc.size()) / avg));
  }
  return s;
}

// Dense D^-1/2 (A + I) D^-1/2 from explicit (unified id, unified id, weight) triples.
inline Matrix normalized_adjacency(std::size_t n, const std::vector<std::tuple<int, int, double>>& edges) {
  Matrix a = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& [u, v, w] : edges) {
    a(u, v) += w;
    a(v, u) += w;
  }
  Vector d = a.rowwise().sum();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) /= std::sqrt(d(i) * d(j));
  }
  return a;
}

// Multiset of meta-path neighbors by exhaustive walks over the statement-table edge list.
// Endpoint-type target: every walk target-m-e contributes m and e. Middle-type target:
// every unordered pair of distinct linked nodes contributes both. The self-reference is
// counted once.
inline std::map<int, int> metapath_multiset(const lakescout::HeteroGraph& g, lakescout::MetaPath path, int target) {
  const int S = static_cast<int>(g.num_statements());
  std::vector<std::pair<int, int>> undirected;
  for (const auto& e : g.edges_st()) undirected.push_back({e.u, S + e.v});
  auto adjacent = [&](int a, int b) {
    for (const auto& [x, y] : undirected) {
      if ((x == a && y == b) || (x == b && y == a)) return true;
    }
    return false;
  };
  const int n = static_cast<int>(g.num_nodes());
  const bool target_is_statement = target < S;
  const bool endpoint = (path == lakescout::MetaPath::STS) == target_is_statement;
  std::map<int, int> out;
  ++out[target];
  if (endpoint) {
    for (int m = 0; m < n; ++m) {
      if (!adjacent(target, m)) continue;
      for (int e = 0; e < n; ++e) {
        if (!adjacent(m, e)) continue;
        ++out[m];
        ++out[e];
      }
    }
  } else {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (adjacent(target, a) && adjacent(target, b)) {
          ++out[a];
          ++out[b];
        }
      }
    }
  }
  return out;
}

inline std::map<int, int> as_multiset(const lakescout::MetaPathNeighborhood& nb) {
  std::map<int, int> out;
  for (const auto& o : nb.occurrences) ++out[o.node];
  return out;
}

// Softmax over LeakyReLU(a_top . h_target + a_bot . h_occurrence), one weight per occurrence.
inline std::vector<double> attention_weights(const std::vector<int>& occurrences, int target, const Matrix& content,
                                             const Vector& a, double slope = 0.2) {
  const Eigen::Index d = content.cols();
  std::vector<double> scores;
  for (int o : occurrences) {
    scores.push_back(leaky(a.head(d).dot(content.row(target).transpose()) + a.tail(d).dot(content.row(o).transpose()),
                           slope));
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) z += (s = std::exp(s - mx));
  for (double& s : scores) s /= z;
  return scores;
}

// One standard LSTM step, gates ordered (input, forget, candidate, output), zero initial state
// handled by the caller.
struct LstmState {
  Vector h, c;
};

inline LstmState lstm_step(const lakescout::LstmCellT<Matrix>& cell, const Vector& x, const LstmState& prev) {
  const Eigen::Index h = cell.w_hh.cols();
  Vector z = cell.w_ih * x + cell.w_hh * prev.h + cell.bias.transpose();
  LstmState next{Vector(h), Vector(h)};
  for (Eigen::Index j = 0; j < h; ++j) {
    const double i = sigmoid(z(j)), f = sigmoid(z(h + j)), g = std::tanh(z(2 * h + j)), o = sigmoid(z(3 * h + j));
    next.c(j) = f * prev.c(j) + i * g;
    next.h(j) = o * std::tanh(next.c(j));
  }
  return next;
}

inline Vector bilstm(const lakescout::ModelParams& p, const std::vector<Vector>& xs) {
  const Eigen::Index h = p.lstm_forward.w_hh.cols();
  Vector fw = Vector::Zero(h), bw = Vector::Zero(h);
  LstmState s{Vector::Zero(h), Vector::Zero(h)};
  for (const auto& x : xs) {
    s = lstm_step(p.lstm_forward, x, s);
    fw += s.h;
  }
  s = {Vector::Zero(h), Vector::Zero(h)};
  for (auto it = xs.rbegin(); it != xs.rend(); ++it) {
    s = lstm_step(p.lstm_backward, *it, s);
    bw += s.h;
  }
  Vector out(2 * h);
  out << fw / static_cast<double>(xs.size()), bw / static_cast<double>(xs.size());
  return out;
}

// sigmoid(w2 . elu(w1 (u o v) + b1) + b2)
inline double decode(const Vector& u, const Vector& v, const lakescout::MlpParams& m) {
  Vector x = u.cwiseProduct(v);
  Vector hidden = m.w1 * x + m.b1.transpose();
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = elu(hidden(i));
  return sigmoid(hidden.dot(m.w2.col(0)) + m.b2(0, 0));
}

inline double cosine(const Vector& a, const Vector& b) {
  const double n = a.norm() * b.norm();
  return n > 0.0 ? a.dot(b) / n : 0.0;
}

// Normalized InfoNCE for one direction from explicit similarity values.
inline double info_nce(const std::vector<double>& positive_sims, const std::vector<std::vector<double>>& negative_sims,
                       double tau) {
  double raw = 0.0, norm = 0.0;
  for (std::size_t a = 0; a < positive_sims.size(); ++a) {
    double z = std::exp(positive_sims[a] / tau);
    for (double s : negative_sims[a]) z += std::exp(s / tau);
    raw += -std::log(std::exp(positive_sims[a] / tau) / z);
    norm += std::log(static_cast<double>(negative_sims[a].size()) + 1.0);
  }
  return raw / norm;
}

// Exact cosine top-k ids with ties by ascending id.
inline std::vector<std::string> top_k(const std::vector<std::string>& ids, const Matrix& vectors, const Vector& q,
                                      std::size_t k) {
  std::vector<std::pair<double, std::string>> s;
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    s.push_back({cosine(vectors.row(i).transpose(), q), ids[static_cast<std::size_t>(i)]});
  }
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

}  // namespace oracle
