#pragma once

#include "autodiff.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "featurizer.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace lakescout {

enum class NodeType { Statement, Table };

struct Edge {
  int u = 0;
  int v = 0;
  double w = 1.0;

  bool operator==(const Edge&) const = default;
};

// Six-decimal fixed point, floored at 1e-6 so a selected edge never vanishes.
inline double quantize_weight(double w) {
  const double q = std::round(w * 1e6) / 1e6;
  return std::max(q, 1e-6);
}

// ---- table similarity -------------------------------------------------------------

class TableSimilarityScorer {
 public:
  virtual ~TableSimilarityScorer() = default;

  virtual double score(const Table& a, const Table& b) const = 0;

  // Scores `query` against every corpus table, in corpus order.
  virtual std::vector<double> score_all(const Table& query, const std::vector<Table>& corpus) const {
    std::vector<double> out;
    out.reserve(corpus.size());
    for (const auto& t : corpus) out.push_back(checked_score(query, t));
    return out;
  }

 protected:
  double checked_score(const Table& a, const Table& b) const {
    try {
      return score(a, b);
    } catch (const std::exception& e) {
      throw RuntimeFailure("table similarity failed for pair (" + a.id + ", " + b.id + "): " + e.what());
    }
  }
};

// Cosine of the mean content-element features of two tables.
class ContentCosineScorer final : public TableSimilarityScorer {
 public:
  explicit ContentCosineScorer(const TextFeaturizer& featurizer) : featurizer_(&featurizer) {}

  Vector mean_features(const Table& t) const {
    const ContentSet cs = extract_content_set(t, *featurizer_);
    Vector m = Vector::Zero(static_cast<Eigen::Index>(featurizer_->dim()));
    for (const auto& e : cs.elements) m += e;
    return m / static_cast<double>(cs.elements.size());
  }

  static double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
  }

  double score(const Table& a, const Table& b) const override {
    return cosine(mean_features(a), mean_features(b));
  }

  std::vector<double> score_all(const Table& query, const std::vector<Table>& corpus) const override {
    const Vector q = mean_features(query);
    std::vector<double> out;
    out.reserve(corpus.size());
    for (const auto& t : corpus) out.push_back(cosine(q, mean_features(t)));
    return out;
  }
 private:
  const TextFeaturizer* featurizer_;
};

// Precomputed scores loaded from a TSV of (table_a, table_b, score); symmetric; absent pairs score 0.
class FileTableScorer final : public TableSimilarityScorer {
 public:
  explicit FileTableScorer(const std::filesystem::path& path) {
    for (const auto& [n, line] : io::lines_of(io::read_file(path))) {
      std::vector<std::string> f;
      std::size_t start = 0;
      while (true) {
        auto tab = line.find('\t', start);
        f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (f.size() != 3) throw ValidationError(path.string() + ":" + std::to_string(n) + ": expected 3 fields");
      try {
        scores_[key(f[0], f[1])] = std::stod(f[2]);
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(n) + ": bad score '" + f[2] + "'");
      }
    }
  }

  double score(const Table& a, const Table& b) const override {
    auto it = scores_.find(key(a.id, b.id));
    return it == scores_.end() ? 0.0 : it->second;
  }

 private:
  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }
  std::map<std::pair<std::string, std::string>, double> scores_;
};

// ---- edge construction -----------------------------------------------------------

struct ScoredPeer {
  int index;
  double weight;
};

// Top-k positive-score peers of `self` (excluded), ties by ascending index. Weights are
// score / max selected score, quantized; all-equal scores give weight 1.
inline std::vector<ScoredPeer> select_top_k(const std::vector<double>& scores, int self, std::size_t k) {
  std::vector<int> cand;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (i != self && scores[static_cast<std::size_t>(i)] > 0.0) cand.push_back(i);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  if (cand.size() > k) cand.resize(k);
  std::vector<ScoredPeer> out;
  if (cand.empty()) return out;
  const double top = scores[static_cast<std::size_t>(cand.front())];
  for (int c : cand) out.push_back({c, quantize_weight(scores[static_cast<std::size_t>(c)] / top)});
  return out;
}

// Union of per-source selections as undirected (u < v) edges; a pair chosen from both
// sides keeps the larger weight.
inline std::vector<Edge> symmetrize(const std::vector<std::vector<ScoredPeer>>& per_source) {
  std::map<std::pair<int, int>, double> acc;
  for (std::size_t s = 0; s < per_source.size(); ++s) {
    for (const auto& p : per_source[s]) {
      const int a = std::min(static_cast<int>(s), p.index), b = std::max(static_cast<int>(s), p.index);
      auto [it, inserted] = acc.emplace(std::make_pair(a, b), p.weight);
      if (!inserted) it->second = std::max(it->second, p.weight);
    }
  }
  std::vector<Edge> out;
  for (const auto& [k, w] : acc) out.push_back({k.first, k.second, w});
  return out;
}

inline std::vector<std::vector<std::string>> tokenize_statements(const std::vector<NLStatement>& statements) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(statements.size());
  for (const auto& s : statements) docs.push_back(tokenize(s.text));
  return docs;
}

// Statement-statement edges (statement indices) from BM25 top-k peers.
inline std::vector<Edge> build_nl_nl_edges(const std::vector<NLStatement>& statements, std::size_t k,
                                           Bm25Params params = {}) {
  if (k < 1) throw ValidationError("K must be at least 1");
  auto docs = tokenize_statements(statements);
  Bm25Index index(docs, params);
  std::vector<std::vector<ScoredPeer>> picks(statements.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    picks[i] = select_top_k(index.score_all(docs[i]), static_cast<int>(i), k);
  }
  return symmetrize(picks);
}

// Table-table edges (table indices). Ground-truth labels pass through with weight 1,
// restricted to pairs of `train_tables` when given; otherwise the scorer's top-k.
inline std::vector<Edge> build_table_table_edges(const DataLake& lake, const TableSimilarityScorer& scorer,
                                                 std::size_t k,
                                                 const std::optional<std::set<std::string>>& train_tables = std::nullopt) {
  if (k < 1) throw ValidationError("K must be at least 1");
  if (lake.table_table_labels) {
    LakeIndex idx(lake);
    std::vector<Edge> out;
    for (const auto& [a, b] : *lake.table_table_labels) {
      if (train_tables && (!train_tables->count(a) || !train_tables->count(b))) continue;
      const int ia = static_cast<int>(*idx.table(a)), ib = static_cast<int>(*idx.table(b));
      if (ia < ib) out.push_back({ia, ib, 1.0});
    }
    return out;
  }
  std::vector<std::vector<ScoredPeer>> picks(lake.tables.size());
  for (std::size_t i = 0; i < lake.tables.size(); ++i) {
    picks[i] = select_top_k(scorer.score_all(lake.tables[i], lake.tables), static_cast<int>(i), k);
  }
  return symmetrize(picks);
}

// Statement-table edges (statement index, table index), one per training-split label.
inline std::vector<Edge> build_nl_table_edges(const DataLake& lake, const std::set<std::string>& train_statements) {
  LakeIndex idx(lake);
  std::vector<Edge> out;
  for (const auto& [s, t] : lake.nl_table_labels) {
    if (!train_statements.count(s)) continue;
    out.push_back({static_cast<int>(*idx.statement(s)), static_cast<int>(*idx.table(t)), 1.0});
  }
  std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
  return out;
}

// D^-1/2 (A + I) D^-1/2 over the unified layout: statements at [0, S), tables at [S, S+T).
inline SparseMatrix normalize_adjacency(const std::vector<Edge>& edges_st, const std::vector<Edge>& edges_ss,
                                        const std::vector<Edge>& edges_tt, std::size_t num_statements,
                                        std::size_t num_tables) {
  const auto n = static_cast<int>(num_statements + num_tables);
  const int s = static_cast<int>(num_statements);
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> degree(static_cast<std::size_t>(n), 1.0);
  auto put = [&](int a, int b, double w) {
    if (!(w >= 0.0)) throw ValidationError("negative or NaN edge weight");
    if (a < 0 || b < 0 || a >= n || b >= n) throw ValidationError("edge index out of range");
    if (a == b) throw ValidationError("self edge in edge list");
    trip.emplace_back(a, b, w);
    trip.emplace_back(b, a, w);
    degree[static_cast<std::size_t>(a)] += w;
    degree[static_cast<std::size_t>(b)] += w;
  };
  for (const auto& e : edges_ss) put(e.u, e.v, e.w);
  for (const auto& e : edges_st) put(e.u, e.v + s, e.w);
  for (const auto& e : edges_tt) put(e.u + s, e.v + s, e.w);
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
  for (auto& t : trip) {
    t = Eigen::Triplet<double>(t.row(), t.col(),
                               t.value() / std::sqrt(degree[static_cast<std::size_t>(t.row())] *
                                                     degree[static_cast<std::size_t>(t.col())]));
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

// ---- graph -----------------------------------------------------------------------

struct GraphConfig {
  std::size_t k = 10;
  Bm25Params bm25;
};

// Heterogeneous graph. Edge endpoints use per-type indices: edges_st is (statement, table),
// edges_ss and edges_tt are (u < v) within their type. Unified node ids put statements at
// [0, S) and tables at [S, S+T).
class HeteroGraph {
 public:
  HeteroGraph() = default;

  HeteroGraph(std::vector<std::string> statement_ids, std::vector<std::string> table_ids, std::vector<Edge> st,
              std::vector<Edge> ss, std::vector<Edge> tt)
      : statement_ids_(std::move(statement_ids)),
        table_ids_(std::move(table_ids)),
        edges_st_(std::move(st)),
        edges_ss_(std::move(ss)),
        edges_tt_(std::move(tt)) {
    const int S = static_cast<int>(statement_ids_.size()), T = static_cast<int>(table_ids_.size());
    auto check = [](const std::vector<Edge>& es, int nu, int nv, bool ordered, const char* what) {
      for (const auto& e : es) {
        if (e.u < 0 || e.v < 0 || e.u >= nu || e.v >= nv) throw ValidationError(std::string(what) + " edge out of range");
        if (ordered && e.u >= e.v) throw ValidationError(std::string(what) + " edge must satisfy u < v");
        if (!(e.w > 0.0 && e.w <= 1.0)) throw ValidationError(std::string(what) + " edge weight outside (0, 1]");
      }
    };
    check(edges_st_, S, T, false, "statement-table");
    check(edges_ss_, S, S, true, "statement-statement");
    check(edges_tt_, T, T, true, "table-table");
    adjacency_ = normalize_adjacency(edges_st_, edges_ss_, edges_tt_, statement_ids_.size(), table_ids_.size());

    st_links_.assign(static_cast<std::size_t>(S + T), {});
    for (const auto& e : edges_st_) {
      st_links_[static_cast<std::size_t>(e.u)].push_back(S + e.v);
      st_links_[static_cast<std::size_t>(S + e.v)].push_back(e.u);
    }
    similar_.assign(static_cast<std::size_t>(S + T), {});
    for (const auto& e : edges_ss_) {
      similar_[static_cast<std::size_t>(e.u)].push_back(e.v);
      similar_[static_cast<std::size_t>(e.v)].push_back(e.u);
    }
    for (const auto& e : edges_tt_) {
      similar_[static_cast<std::size_t>(S + e.u)].push_back(S + e.v);
      similar_[static_cast<std::size_t>(S + e.v)].push_back(S + e.u);
    }
    for (auto& l : st_links_) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
    for (auto& l : similar_) std::sort(l.begin(), l.end());
  }

  std::size_t num_statements() const { return statement_ids_.size(); }
  std::size_t num_tables() const { return table_ids_.size(); }
  std::size_t num_nodes() const { return statement_ids_.size() + table_ids_.size(); }

  const std::vector<std::string>& statement_ids() const { return statement_ids_; }
  const std::vector<std::string>& table_ids() const { return table_ids_; }
  const std::vector<Edge>& edges_st() const { return edges_st_; }
  const std::vector<Edge>& edges_ss() const { return edges_ss_; }
  const std::vector<Edge>& edges_tt() const { return edges_tt_; }
  const SparseMatrix& normalized_adjacency() const { return adjacency_; }

  NodeType type(int node) const {
    return node < static_cast<int>(num_statements()) ? NodeType::Statement : NodeType::Table;
  }
  int table_node(std::size_t table_index) const { return static_cast<int>(num_statements() + table_index); }
  const std::string& node_id(int node) const {
    return type(node) == NodeType::Statement ? statement_ids_[static_cast<std::size_t>(node)]
                                             : table_ids_[static_cast<std::size_t>(node) - num_statements()];
  }

  // Unified ids of opposite-type nodes joined to `node` by a statement-table edge, ascending.
  const std::vector<int>& st_links(int node) const { return st_links_[static_cast<std::size_t>(node)]; }
  // Unified ids of same-type similarity neighbors (statement-statement or table-table edges).
  const std::vector<int>& similar(int node) const { return similar_[static_cast<std::size_t>(node)]; }

  bool operator==(const HeteroGraph& o) const {
    return statement_ids_ == o.statement_ids_ && table_ids_ == o.table_ids_ && edges_st_ == o.edges_st_ &&
           edges_ss_ == o.edges_ss_ && edges_tt_ == o.edges_tt_;
  }

 private:
  std::vector<std::string> statement_ids_, table_ids_;
  std::vector<Edge> edges_st_, edges_ss_, edges_tt_;
  SparseMatrix adjacency_;
  std::vector<std::vector<int>> st_links_;
  std::vector<std::vector<int>> similar_;
};

inline HeteroGraph build_graph(const DataLake& lake, const Split& split, const TableSimilarityScorer& scorer,
                               const GraphConfig& config = {}) {
  std::vector<std::string> sids, tids;
  for (const auto& s : lake.statements) sids.push_back(s.id);
  for (const auto& t : lake.tables) tids.push_back(t.id);
  std::set<std::string> train(split.statements.train.begin(), split.statements.train.end());
  std::optional<std::set<std::string>> train_tables;
  if (split.tables) train_tables = std::set<std::string>(split.tables->train.begin(), split.tables->train.end());
  return HeteroGraph(std::move(sids), std::move(tids), build_nl_table_edges(lake, train),
                     build_nl_nl_edges(lake.statements, config.k, config.bm25),
                     build_table_table_edges(lake, scorer, config.k, train_tables));
}

// ---- meta-paths --------------------------------------------------------------------

enum class MetaPath { STS, TST };

inline constexpr MetaPath kMetaPaths[] = {MetaPath::STS, MetaPath::TST};

inline const char* to_string(MetaPath p) { return p == MetaPath::STS ? "S-T-S" : "T-S-T"; }

inline NodeType endpoint_type(MetaPath p) { return p == MetaPath::STS ? NodeType::Statement : NodeType::Table; }

struct Occurrence {
  int node;
  int instance;  // -1 for the self-reference

  bool operator==(const Occurrence&) const = default;
};

struct MetaPathNeighborhood {
  int target = 0;
  MetaPath path = MetaPath::STS;
  std::vector<Occurrence> occurrences;

  // (node, multiplicity), ascending node.
  std::vector<std::pair<int, int>> compressed() const {
    std::map<int, int> counts;
    for (const auto& o : occurrences) ++counts[o.node];
    return {counts.begin(), counts.end()};
  }
};

// Occurrences of the target's meta-path neighbors.
//
// When the target has the path's endpoint type, every walk target-m-e over statement-table
// edges is an instance contributing m and e (walks that return to the target included).
// When the target has the middle type, every unordered pair {a, b} of distinct linked
// endpoints is an instance a-target-b contributing a and b. The self-reference comes first.
//
// `links` overrides the target's own statement-table links (for transient query nodes or
// borrowed context); `cap` > 0 truncates to whole instances, keeping at most cap occurrences.
//
// The typed form takes a target outside the graph (a transient query node with id >= the
// node count) whose links are given explicitly.
inline MetaPathNeighborhood enumerate_metapath_neighbors(const HeteroGraph& g, MetaPath path, int target,
                                                         NodeType ttype, std::span<const int> own,
                                                         std::size_t cap = 0) {
  MetaPathNeighborhood nb;
  nb.target = target;
  nb.path = path;
  nb.occurrences.push_back({target, -1});
  for (int l : own) {
    if (l < 0 || l >= static_cast<int>(g.num_nodes()) || g.type(l) == ttype) {
      throw ValidationError("meta-path link " + std::to_string(l) + " is not an opposite-type node");
    }
  }
  int instance = 0;
  auto room = [&](std::size_t extra) { return cap == 0 || nb.occurrences.size() + extra <= cap; };

  if (ttype == endpoint_type(path)) {
    for (int m : own) {
      const auto& far = g.st_links(m);
      bool saw_target = false;
      for (int e : far) {
        if (!room(2)) return nb;
        saw_target = saw_target || e == target;
        nb.occurrences.push_back({m, instance});
        nb.occurrences.push_back({e, instance});
        ++instance;
      }
      if (!saw_target) {
        if (!room(2)) return nb;
        nb.occurrences.push_back({m, instance});
        nb.occurrences.push_back({target, instance});
        ++instance;
      }
    }
  } else {
    for (std::size_t i = 0; i < own.size(); ++i) {
      for (std::size_t j = i + 1; j < own.size(); ++j) {
        if (!room(2)) return nb;
        nb.occurrences.push_back({own[i], instance});
        nb.occurrences.push_back({own[j], instance});
        ++instance;
      }
    }
  }
  return nb;
}

inline MetaPathNeighborhood enumerate_metapath_neighbors(const HeteroGraph& g, MetaPath path, int target,
                                                         std::optional<std::span<const int>> links = std::nullopt,
                                                         std::size_t cap = 0) {
  if (target < 0 || target >= static_cast<int>(g.num_nodes())) {
    throw ValidationError("meta-path target " + std::to_string(target) + " out of range");
  }
  const std::span<const int> own = links ? *links : std::span<const int>(g.st_links(target));
  return enumerate_metapath_neighbors(g, path, target, g.type(target), own, cap);
}

// Statement-table links used as meta-path context: the node's own links, or, for a node
// with none, the union of the links of its same-type similarity neighbors.
inline std::vector<int> context_links(const HeteroGraph& g, int node) {
  const auto& own = g.st_links(node);
  if (!own.empty()) return own;
  std::set<int> borrowed;
  for (int peer : g.similar(node)) {
    for (int l : g.st_links(peer)) borrowed.insert(l);
  }
  return {borrowed.begin(), borrowed.end()};
}

// ---- serialization -----------------------------------------------------------------

inline std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", w);
  return buf;
}

inline std::string serialize_graph(const HeteroGraph& g) {
  nlohmann::ordered_json h;
  h["format"] = "lakescout-graph";
  h["version"] = 1;
  h["num_statements"] = g.num_statements();
  h["num_tables"] = g.num_tables();
  h["statements"] = g.statement_ids();
  h["tables"] = g.table_ids();
  std::string out = h.dump() + "\n";
  auto section = [&](const char* name, const std::vector<Edge>& es) {
    out += std::string("[") + name + "]\n";
    for (const auto& e : es) out += std::to_string(e.u) + "\t" + std::to_string(e.v) + "\t" + format_weight(e.w) + "\n";
  };
  section("edges_st", g.edges_st());
  section("edges_ss", g.edges_ss());
  section("edges_tt", g.edges_tt());
  return out;
}

inline HeteroGraph deserialize_graph(const std::string& text, const std::string& source = "graph") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty graph file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(source + ": bad graph header: " + e.what());
  }
  if (h.value("format", "") != "lakescout-graph") throw ValidationError(source + ": not a graph file");
  if (h.value("version", 0) != 1) throw ValidationError(source + ": unsupported graph version");
  std::vector<Edge> st, ss, tt;
  std::vector<Edge>* cur = nullptr;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (line == "[edges_st]") { cur = &st; continue; }
    if (line == "[edges_ss]") { cur = &ss; continue; }
    if (line == "[edges_tt]") { cur = &tt; continue; }
    if (!cur) throw ValidationError(source + ":" + std::to_string(n) + ": edge outside a section");
    Edge e;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d\t%d\t%lf%c", &e.u, &e.v, &e.w, &tail) != 3) {
      throw ValidationError(source + ":" + std::to_string(n) + ": malformed edge line");
    }
    cur->push_back(e);
  }
  return HeteroGraph(h.at("statements").get<std::vector<std::string>>(), h.at("tables").get<std::vector<std::string>>(),
                     std::move(st), std::move(ss), std::move(tt));
}

inline void save_graph(const HeteroGraph& g, const std::filesystem::path& p) { io::write_file(p, serialize_graph(g)); }

inline HeteroGraph load_graph(const std::filesystem::path& p) { return deserialize_graph(io::read_file(p), p.string()); }

}  // namespace lakescout
