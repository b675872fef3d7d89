#pragma once

#include "adam.hpp"
#include "aggregation.hpp"
#include "binary_io.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "objectives.hpp"
#include "params.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lakescout {

struct Hyperparams {
  std::size_t d = 128;
  std::size_t d_c = 256;
  std::size_t k = 10;
  std::size_t r = 3;
  double tau = 0.07;
  double lambda = 0.5;
  double beta = 0.5;
  double mask_ratio = 0.3;
  std::size_t negatives_per_anchor = 16;
  double learning_rate = 8e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double candidate_fraction = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  EncoderMode encoder = EncoderMode::BiLstm;
  std::size_t classifier_epochs = 200;
  std::size_t classifier_negative_ratio = 4;
  double classifier_learning_rate = 1e-2;
  std::size_t n_trees = 10;
  std::size_t leaf_capacity = 16;
  std::size_t search_breadth_factor = 10;

  void validate() const {
    auto positive = [](bool ok, const char* what) {
      if (!ok) throw ValidationError(std::string(what) + " must be positive");
    };
    positive(d > 0, "d");
    positive(d_c > 0, "d_c");
    positive(k > 0, "k");
    positive(r > 0, "r");
    positive(tau > 0.0, "tau");
    positive(negatives_per_anchor > 0, "negatives_per_anchor");
    positive(learning_rate >= 0.0, "learning_rate");
    positive(epochs > 0, "epochs");
    positive(batch_size > 0, "batch_size");
    positive(classifier_epochs > 0, "classifier_epochs");
    positive(classifier_negative_ratio > 0, "classifier_negative_ratio");
    positive(n_trees > 0, "n_trees");
    positive(leaf_capacity > 0, "leaf_capacity");
    positive(search_breadth_factor > 0, "search_breadth_factor");
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0, 1]");
    if (beta < 0.0) throw ValidationError("beta must be nonnegative");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ValidationError("mask_ratio must lie in (0, 1)");
    if (!(candidate_fraction > 0.0 && candidate_fraction <= 1.0)) {
      throw ValidationError("candidate_fraction must lie in (0, 1]");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
      throw ValidationError("invalid Adam constants");
    }
    if (encoder == EncoderMode::BiLstm && d % 2 != 0) throw ValidationError("bilstm encoder needs an even d");
  }

  ModelDims dims() const { return {d, d_c, r, encoder}; }
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

inline void to_json(nlohmann::ordered_json& j, const Hyperparams& h) {
  j = nlohmann::ordered_json{{"d", h.d},
                             {"d_c", h.d_c},
                             {"k", h.k},
                             {"r", h.r},
                             {"tau", h.tau},
                             {"lambda", h.lambda},
                             {"beta", h.beta},
                             {"mask_ratio", h.mask_ratio},
                             {"negatives_per_anchor", h.negatives_per_anchor},
                             {"learning_rate", h.learning_rate},
                             {"epochs", h.epochs},
                             {"batch_size", h.batch_size},
                             {"seed", h.seed},
                             {"candidate_fraction", h.candidate_fraction},
                             {"adam_beta1", h.adam_beta1},
                             {"adam_beta2", h.adam_beta2},
                             {"adam_epsilon", h.adam_epsilon},
                             {"encoder", to_string(h.encoder)},
                             {"classifier_epochs", h.classifier_epochs},
                             {"classifier_negative_ratio", h.classifier_negative_ratio},
                             {"classifier_learning_rate", h.classifier_learning_rate},
                             {"n_trees", h.n_trees},
                             {"leaf_capacity", h.leaf_capacity},
                             {"search_breadth_factor", h.search_breadth_factor}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("hyperparameter config must be a JSON object");
  Hyperparams h;
  nlohmann::ordered_json defaults = h;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("unknown hyperparameter '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("d", h.d);
    get("d_c", h.d_c);
    get("k", h.k);
    get("r", h.r);
    get("tau", h.tau);
    get("lambda", h.lambda);
    get("beta", h.beta);
    get("mask_ratio", h.mask_ratio);
    get("negatives_per_anchor", h.negatives_per_anchor);
    get("learning_rate", h.learning_rate);
    get("epochs", h.epochs);
    get("batch_size", h.batch_size);
    get("seed", h.seed);
    get("candidate_fraction", h.candidate_fraction);
    get("adam_beta1", h.adam_beta1);
    get("adam_beta2", h.adam_beta2);
    get("adam_epsilon", h.adam_epsilon);
    get("classifier_epochs", h.classifier_epochs);
    get("classifier_negative_ratio", h.classifier_negative_ratio);
    get("classifier_learning_rate", h.classifier_learning_rate);
    get("n_trees", h.n_trees);
    get("leaf_capacity", h.leaf_capacity);
    get("search_breadth_factor", h.search_breadth_factor);
    if (j.contains("encoder")) h.encoder = encoder_mode_from_string(j.at("encoder").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad hyperparameter value: ") + e.what());
  }
  h.validate();
  return h;
}

inline Hyperparams load_hyperparams(const std::filesystem::path& p) {
  try {
    return hyperparams_from_json(nlohmann::json::parse(io::read_file(p)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// ---- sampling ------------------------------------------------------------------------

// Same-type negatives per anchor, uniform without replacement. `types[i]` is the type of
// `nodes[i]`. Anchors alone in their type get no negatives.
inline std::vector<ContrastiveAnchor> sample_contrastive_negatives(const std::vector<int>& nodes,
                                                                   const std::vector<NodeType>& types, std::size_t m,
                                                                   Rng& rng) {
  if (nodes.size() != types.size()) throw ValidationError("node and type lists differ in length");
  std::map<NodeType, std::vector<int>> pools;
  for (std::size_t i = 0; i < nodes.size(); ++i) pools[types[i]].push_back(nodes[i]);
  std::vector<ContrastiveAnchor> out;
  out.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::vector<int> others;
    for (int n : pools[types[i]]) {
      if (n != nodes[i]) others.push_back(n);
    }
    ContrastiveAnchor a{nodes[i], {}};
    for (std::size_t idx : rng.sample_without_replacement(others.size(), m)) a.negatives.push_back(others[idx]);
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<ContrastiveAnchor> sample_contrastive_negatives(const std::vector<int>& nodes,
                                                                   const std::vector<NodeType>& types, std::size_t m,
                                                                   std::uint64_t seed) {
  Rng rng(seed);
  return sample_contrastive_negatives(nodes, types, m, rng);
}

// Pairs in unified node ids; u < v.
struct NodePair {
  int u = 0, v = 0;
  bool operator==(const NodePair&) const = default;
  auto operator<=>(const NodePair&) const = default;
};

struct EdgeBatch {
  std::vector<NodePair> masked;     // E_m
  std::vector<NodePair> negatives;  // E^-, same length, type-matched position by position
  double mask_ratio = 0.3;
};

inline NodePair make_pair_sorted(int a, int b) { return a < b ? NodePair{a, b} : NodePair{b, a}; }

// E_ST: statement-table edges and table-table edges with a training endpoint.
inline std::vector<NodePair> eligible_edges(const HeteroGraph& g, const std::set<int>& training_nodes) {
  const int S = static_cast<int>(g.num_statements());
  std::vector<NodePair> out;
  for (const auto& e : g.edges_st()) {
    if (training_nodes.count(e.u) || training_nodes.count(S + e.v)) out.push_back({e.u, S + e.v});
  }
  for (const auto& e : g.edges_tt()) {
    if (training_nodes.count(S + e.u) || training_nodes.count(S + e.v)) out.push_back({S + e.u, S + e.v});
  }
  return out;
}

namespace detail {

// k distinct pairs from `a` x `b` (or unordered pairs within `a` when `same`), skipping
// pairs in `taken`. Throws when fewer than k exist.
inline std::vector<NodePair> sample_unconnected(const std::vector<int>& a, const std::vector<int>& b, bool same,
                                                const std::set<NodePair>& taken, std::size_t k, Rng& rng,
                                                const char* what) {
  if (k == 0) return {};
  const std::size_t total = same ? a.size() * (a.size() > 0 ? a.size() - 1 : 0) / 2 : a.size() * b.size();
  std::size_t blocked = 0;
  for (const auto& p : taken) {
    const bool ua = std::binary_search(a.begin(), a.end(), p.u), va = std::binary_search(a.begin(), a.end(), p.v);
    if (same ? (ua && va) : (ua && std::binary_search(b.begin(), b.end(), p.v))) ++blocked;
  }
  if (total < blocked + k) {
    throw RuntimeFailure(std::string("negative edge sampling exhausted: ") + what + " needs " + std::to_string(k) +
                         " unconnected pairs, only " + std::to_string(total - blocked) + " exist");
  }
  std::vector<NodePair> out;
  if (total <= 4'000'000) {
    std::vector<NodePair> cand;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (same) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
          NodePair p = make_pair_sorted(a[i], a[j]);
          if (!taken.count(p)) cand.push_back(p);
        }
      } else {
        for (int y : b) {
          NodePair p = make_pair_sorted(a[i], y);
          if (!taken.count(p)) cand.push_back(p);
        }
      }
    }
    for (std::size_t idx : rng.sample_without_replacement(cand.size(), k)) out.push_back(cand[idx]);
    return out;
  }
  std::set<NodePair> used = taken;
  while (out.size() < k) {
    const int x = a[rng.below(a.size())];
    const int y = same ? a[rng.below(a.size())] : b[rng.below(b.size())];
    if (x == y) continue;
    NodePair p = make_pair_sorted(x, y);
    if (used.insert(p).second) out.push_back(p);
  }
  return out;
}

}  // namespace detail

// Bernoulli(p) masking over E_ST (at least one edge is always masked), then an equal number
// of type-matched pairs among training nodes that share no edge.
inline EdgeBatch sample_edge_batches(const HeteroGraph& g, const std::vector<int>& training_nodes, double p, Rng& rng) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("mask ratio must lie in (0, 1)");
  const std::set<int> training(training_nodes.begin(), training_nodes.end());
  const auto eligible = eligible_edges(g, training);
  if (eligible.empty()) throw RuntimeFailure("no statement-table or table-table edges touch the training nodes");
  EdgeBatch batch;
  batch.mask_ratio = p;
  for (const auto& e : eligible) {
    if (rng.bernoulli(p)) batch.masked.push_back(e);
  }
  if (batch.masked.empty()) batch.masked.push_back(eligible[rng.below(eligible.size())]);

  const int S = static_cast<int>(g.num_statements());
  std::set<NodePair> connected;
  for (const auto& e : g.edges_st()) connected.insert({e.u, S + e.v});
  for (const auto& e : g.edges_ss()) connected.insert({e.u, e.v});
  for (const auto& e : g.edges_tt()) connected.insert({S + e.u, S + e.v});
  std::vector<int> stmts, tables;
  for (int n : training) (n < S ? stmts : tables).push_back(n);
  std::size_t n_st = 0, n_tt = 0;
  for (const auto& e : batch.masked) (e.u < S ? n_st : n_tt)++;
  auto neg_st = detail::sample_unconnected(stmts, tables, false, connected, n_st, rng, "statement-table");
  auto neg_tt = detail::sample_unconnected(tables, tables, true, connected, n_tt, rng, "table-table");
  std::size_t ist = 0, itt = 0;
  for (const auto& e : batch.masked) batch.negatives.push_back(e.u < S ? neg_st[ist++] : neg_tt[itt++]);
  return batch;
}

// The graph with the masked edges hidden from message passing.
inline HeteroGraph without_edges(const HeteroGraph& g, const std::vector<NodePair>& hidden) {
  const int S = static_cast<int>(g.num_statements());
  const std::set<NodePair> h(hidden.begin(), hidden.end());
  std::vector<Edge> st, tt;
  for (const auto& e : g.edges_st()) {
    if (!h.count({e.u, S + e.v})) st.push_back(e);
  }
  for (const auto& e : g.edges_tt()) {
    if (!h.count({S + e.u, S + e.v})) tt.push_back(e);
  }
  return HeteroGraph(g.statement_ids(), g.table_ids(), std::move(st), g.edges_ss(), std::move(tt));
}

// ---- training ------------------------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  std::size_t epoch = 0;  // 1-based; 0 = untrained
  double validation_score = 0.0;
  std::string rng_state;
  Hyperparams hyper;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double edge_loss = 0.0;
  double contrastive_loss = 0.0;
  double validation_score = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochStats> trace;
  std::vector<std::string> warnings;
  ModelParams final_params;
};

// Everything train() consumes, in unified node ids.
struct TrainingData {
  const HeteroGraph* graph = nullptr;
  EncoderInput input;
  std::vector<int> training_nodes;
  std::vector<NodePair> validation_positive;  // (statement, table)
  std::vector<NodePair> validation_negative;
};

inline constexpr std::uint64_t kStreamInit = 10;
inline constexpr std::uint64_t kStreamEdges = 11;
inline constexpr std::uint64_t kStreamEpoch = 12;
inline constexpr std::uint64_t kStreamValidation = 13;

// Validation pairs: every (validation statement, gold table) label plus one sampled
// non-gold table per label.
inline void add_validation_pairs(TrainingData& data, const DataLake& lake, const Split& split, std::uint64_t seed) {
  const LakeIndex idx(lake);
  const int S = static_cast<int>(lake.statements.size());
  const auto gold = lake.gold_by_statement();
  Rng rng(Rng::derive(seed, kStreamValidation));
  for (const auto& sid : split.statements.val) {
    auto it = gold.find(sid);
    if (it == gold.end()) continue;
    const int s = static_cast<int>(*idx.statement(sid));
    std::set<int> g;
    for (const auto& tid : it->second) g.insert(S + static_cast<int>(*idx.table(tid)));
    std::vector<int> non;
    for (int t = S; t < S + static_cast<int>(lake.tables.size()); ++t) {
      if (!g.count(t)) non.push_back(t);
    }
    for (int t : g) {
      data.validation_positive.push_back({s, t});
      if (!non.empty()) data.validation_negative.push_back({s, non[rng.below(non.size())]});
    }
  }
}

inline TrainingData make_training_data(const DataLake& lake, const HeteroGraph& g, const Split& split,
                                       const TextFeaturizer& f, std::uint64_t seed) {
  check_graph_matches(lake, g);
  TrainingData data;
  data.graph = &g;
  data.input = encoder_input_for(lake, f);
  const LakeIndex idx(lake);
  const int S = static_cast<int>(lake.statements.size());
  for (const auto& sid : split.statements.train) data.training_nodes.push_back(static_cast<int>(*idx.statement(sid)));
  if (split.tables) {
    for (const auto& tid : split.tables->train) data.training_nodes.push_back(S + static_cast<int>(*idx.table(tid)));
  } else {
    for (int t = 0; t < static_cast<int>(lake.tables.size()); ++t) data.training_nodes.push_back(S + t);
  }
  std::sort(data.training_nodes.begin(), data.training_nodes.end());
  add_validation_pairs(data, lake, split, seed);
  return data;
}

inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// F1 of decoder probabilities thresholded at 0.5 over the validation pairs.
inline double validation_f1(const Matrix& h, const MlpParams& decoder, const std::vector<NodePair>& pos,
                            const std::vector<NodePair>& neg) {
  auto probs = [&](const std::vector<NodePair>& ps) {
    Matrix a(static_cast<Eigen::Index>(ps.size()), h.cols()), b(static_cast<Eigen::Index>(ps.size()), h.cols());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      a.row(static_cast<Eigen::Index>(i)) = h.row(ps[i].u);
      b.row(static_cast<Eigen::Index>(i)) = h.row(ps[i].v);
    }
    return decode_edges(a, b, decoder);
  };
  std::size_t tp = 0, fp = 0, fn = 0;
  if (!pos.empty()) {
    const Vector p = probs(pos);
    for (Eigen::Index i = 0; i < p.size(); ++i) (p(i) > 0.5 ? tp : fn)++;
  }
  if (!neg.empty()) {
    const Vector p = probs(neg);
    for (Eigen::Index i = 0; i < p.size(); ++i) fp += p(i) > 0.5;
  }
  return f1_score(tp, fp, fn);
}

inline auto model_visitor() {
  return [](auto&& f, auto&... xs) { visit_tensors(f, xs...); };
}

// Per epoch: fresh contrastive negatives, shuffled anchors cut into minibatches, the masked
// and negative edges shuffled and dealt across the same minibatches, one Adam step each.
// Validation F1 after every epoch picks the checkpoint (earliest on ties); without
// validation pairs the score is the negated epoch loss.
inline TrainResult train(const TrainingData& data, const Hyperparams& hyper,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  hyper.validate();
  const HeteroGraph& g = *data.graph;
  if (data.input.statement_sum.cols() != static_cast<Eigen::Index>(hyper.d_c)) {
    throw ValidationError("feature dimension " + std::to_string(data.input.statement_sum.cols()) +
                          " does not match d_c = " + std::to_string(hyper.d_c));
  }
  if (data.training_nodes.empty()) throw ValidationError("no training nodes");
  TrainResult result;
  ModelParams params = init_model(hyper.dims(), Rng::derive(hyper.seed, kStreamInit));
  Adam<ModelParams> adam(params, hyper.adam(), model_visitor());

  Rng edge_rng(Rng::derive(hyper.seed, kStreamEdges));
  EdgeBatch edges = sample_edge_batches(g, data.training_nodes, hyper.mask_ratio, edge_rng);
  const HeteroGraph train_view = without_edges(g, edges.masked);
  AggregationOptions opt;
  opt.neighbor_cap = neighbor_cap_for(g);
  const GraphContext train_ctx = make_graph_context(train_view, opt.neighbor_cap);
  const GraphContext full_ctx = make_graph_context(g, opt.neighbor_cap);

  std::vector<NodeType> types;
  for (int n : data.training_nodes) types.push_back(g.type(n));
  {
    std::map<NodeType, std::size_t> count;
    for (auto t : types) ++count[t];
    for (const auto& [t, c] : count) {
      if (c == 1) {
        result.warnings.push_back(std::string("only one training ") +
                                  (t == NodeType::Statement ? "statement" : "table") +
                                  "; its contrastive term is skipped");
      }
    }
  }

  Rng epoch_rng(Rng::derive(hyper.seed, kStreamEpoch));
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    auto meta_neg = sample_contrastive_negatives(data.training_nodes, types, hyper.negatives_per_anchor, epoch_rng);
    auto gcn_neg = sample_contrastive_negatives(data.training_nodes, types, hyper.negatives_per_anchor, epoch_rng);
    std::vector<std::size_t> order(data.training_nodes.size());
    std::iota(order.begin(), order.end(), 0);
    epoch_rng.shuffle(order);
    std::vector<std::size_t> edge_order(edges.masked.size());
    std::iota(edge_order.begin(), edge_order.end(), 0);
    epoch_rng.shuffle(edge_order);

    const std::size_t n_batches = (order.size() + hyper.batch_size - 1) / hyper.batch_size;
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * hyper.batch_size, hi = std::min(order.size(), lo + hyper.batch_size);
      std::vector<ContrastiveAnchor> mp, gp;
      std::vector<int> scope;
      for (std::size_t i = lo; i < hi; ++i) {
        mp.push_back(meta_neg[order[i]]);
        gp.push_back(gcn_neg[order[i]]);
        scope.push_back(data.training_nodes[order[i]]);
      }
      EdgePairs pos, neg;
      const std::size_t m = edge_order.size();
      const std::size_t elo = m >= n_batches ? b * m / n_batches : b % m;
      const std::size_t ehi = m >= n_batches ? (b + 1) * m / n_batches : elo + 1;
      for (std::size_t i = elo; i < ehi; ++i) {
        const auto& pe = edges.masked[edge_order[i]];
        const auto& ne = edges.negatives[edge_order[i]];
        pos.u.push_back(pe.u);
        pos.v.push_back(pe.v);
        neg.u.push_back(ne.u);
        neg.v.push_back(ne.v);
      }

      ad::Tape tape;
      auto bound = bind(tape, params);
      auto fwd = model_forward(bound, data.input, train_ctx, scope, opt, true);
      ad::Var l_cl = contrastive_loss(fwd.h_meta, fwd.h_gcn, mp, gp, hyper.tau, hyper.lambda);
      ad::Var l_er = edge_reconstruction_loss(fwd.h_meta, pos, neg, bound.decoder);
      ad::Var loss = joint_loss(l_er, l_cl, hyper.beta);
      if (!std::isfinite(loss.scalar())) {
        throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      }
      tape.backward(loss);
      ModelParams grads = gradients(bound, params);
      adam.step(params, grads, model_visitor());
      stats.loss += loss.scalar() / static_cast<double>(n_batches);
      stats.edge_loss += l_er.scalar() / static_cast<double>(n_batches);
      stats.contrastive_loss += l_cl.scalar() / static_cast<double>(n_batches);
    }
    if (!all_finite(params)) throw RuntimeFailure("non-finite parameters after epoch " + std::to_string(epoch));

    if (data.validation_positive.empty()) {
      stats.validation_score = -stats.loss;
    } else {
      ad::Tape tape;
      auto bound = bind_constant(tape, params);
      auto fwd = model_forward(bound, data.input, full_ctx, all_nodes(g.num_nodes()), opt, false);
      stats.validation_score =
          validation_f1(fwd.h_meta.value(), params.decoder, data.validation_positive, data.validation_negative);
    }
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (!have_best || stats.validation_score > result.best.validation_score) {
      have_best = true;
      result.best.params = params;
      round_to_float(result.best.params);
      result.best.epoch = epoch;
      result.best.validation_score = stats.validation_score;
      result.best.rng_state = epoch_rng.state();
    }
  }
  result.best.hyper = hyper;
  result.final_params = params;
  return result;
}

inline TrainResult train(const DataLake& lake, const HeteroGraph& g, const Split& split, const TextFeaturizer& f,
                         const Hyperparams& hyper, const std::function<void(const EpochStats&)>& on_epoch = {}) {
  if (f.dim() != hyper.d_c) throw ValidationError("featurizer dimension does not match d_c");
  TrainingData data = make_training_data(lake, g, split, f, hyper.seed);
  return train(data, hyper, on_epoch);
}

// ---- checkpoint files -----------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& p) {
  nlohmann::ordered_json h;
  h["kind"] = "checkpoint";
  h["version"] = kCheckpointVersion;
  h["hyperparams"] = c.hyper;
  h["epoch"] = c.epoch;
  h["validation_score"] = c.validation_score;
  h["seed"] = c.hyper.seed;
  h["rng_state"] = c.rng_state;
  h["encoder"] = to_string(c.params.mode);
  h["gcn_layers"] = c.params.gcn.size();
  std::vector<binio::Block> blocks;
  ModelParams copy = c.params;
  visit_tensors([&](const std::string& name, Matrix& m) { blocks.push_back(binio::float_block(name, m)); }, copy);
  binio::write(p, h, blocks);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  auto d = binio::read(p, "checkpoint", kCheckpointVersion);
  Checkpoint c;
  try {
    c.hyper = hyperparams_from_json(d.manifest.at("hyperparams"));
    c.epoch = d.manifest.at("epoch").get<std::size_t>();
    c.validation_score = d.manifest.at("validation_score").get<double>();
    c.rng_state = d.manifest.at("rng_state").get<std::string>();
    c.params.mode = encoder_mode_from_string(d.manifest.at("encoder").get<std::string>());
    c.params.gcn.resize(d.manifest.at("gcn_layers").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": bad checkpoint manifest: " + e.what());
  }
  visit_tensors([&](const std::string& name, Matrix& m) { m = binio::to_matrix(d.block(name)); }, c.params);
  if (!all_finite(c.params)) throw ValidationError(p.string() + ": checkpoint holds non-finite values");
  return c;
}

}  // namespace lakescout
