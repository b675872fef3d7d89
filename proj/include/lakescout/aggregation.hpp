#pragma once

#include "autodiff.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "params.hpp"

#include <optional>
#include <vector>

namespace lakescout {

enum class Activation { Identity, Elu, Relu };

struct AggregationOptions {
  Activation attention = Activation::Elu;  // meta-path and path-level outputs
  Activation gcn = Activation::Relu;
  double leaky_slope = 0.2;
  std::size_t neighbor_cap = 0;  // 0 = uncapped

  // Both activations replaced by the identity; used by tests.
  static AggregationOptions linear() { return {Activation::Identity, Activation::Identity, 0.2, 0}; }
};

inline ad::Var activate(const ad::Var& x, Activation a) {
  switch (a) {
    case Activation::Elu: return ad::elu(x);
    case Activation::Relu: return ad::relu(x);
    case Activation::Identity: break;
  }
  return x;
}

// Compressed meta-path neighborhoods of several targets for one path, flattened into
// segments: segment r belongs to targets[r] and lists (neighbor, multiplicity) entries.
struct PathNeighborhoods {
  MetaPath path = MetaPath::STS;
  std::vector<int> targets;
  std::vector<int> offsets{0};
  std::vector<int> target_of;
  std::vector<int> neighbor;
  std::vector<double> multiplicity;

  void add(const MetaPathNeighborhood& nb) {
    if (nb.occurrences.empty()) throw ValidationError("empty meta-path neighborhood");
    targets.push_back(nb.target);
    for (const auto& [node, count] : nb.compressed()) {
      target_of.push_back(nb.target);
      neighbor.push_back(node);
      multiplicity.push_back(static_cast<double>(count));
    }
    offsets.push_back(static_cast<int>(neighbor.size()));
  }

  std::size_t size() const { return targets.size(); }
};

// Neighborhoods of every graph node under both paths, with borrowed context for nodes
// that have no statement-table links of their own.
struct GraphContext {
  const HeteroGraph* graph = nullptr;
  PathNeighborhoods sts, tst;

  const PathNeighborhoods& path(MetaPath p) const { return p == MetaPath::STS ? sts : tst; }
};

inline GraphContext make_graph_context(const HeteroGraph& g, std::size_t neighbor_cap = 0) {
  GraphContext ctx;
  ctx.graph = &g;
  ctx.sts.path = MetaPath::STS;
  ctx.tst.path = MetaPath::TST;
  for (int v = 0; v < static_cast<int>(g.num_nodes()); ++v) {
    const std::vector<int> links = context_links(g, v);
    ctx.sts.add(enumerate_metapath_neighbors(g, MetaPath::STS, v, std::span<const int>(links), neighbor_cap));
    ctx.tst.add(enumerate_metapath_neighbors(g, MetaPath::TST, v, std::span<const int>(links), neighbor_cap));
  }
  return ctx;
}

// Attention weight of each flattened entry (the total over that neighbor's occurrences).
inline ad::Var node_attention(const ad::Var& content, const PathNeighborhoods& nb, const ad::Var& a_p,
                              double leaky_slope = 0.2) {
  const Eigen::Index d = content.cols();
  if (a_p.rows() != 2 * d || a_p.cols() != 1) throw ValidationError("attention vector must be 2d x 1");
  ad::Var left = ad::matmul(content, ad::slice_rows(a_p, 0, d));
  ad::Var right = ad::matmul(content, ad::slice_rows(a_p, d, d));
  ad::Var score = ad::add(ad::gather_rows(left, nb.target_of), ad::gather_rows(right, nb.neighbor));
  return ad::segment_softmax(ad::leaky_relu(score, leaky_slope), nb.offsets, nb.multiplicity);
}

// sigma(sum over occurrences of alpha * h_c(neighbor)), one row per target.
inline ad::Var aggregate_path(const ad::Var& content, const PathNeighborhoods& nb, const ad::Var& a_p,
                              const AggregationOptions& opt = {}) {
  ad::Var w = node_attention(content, nb, a_p, opt.leaky_slope);
  return activate(ad::segment_weighted_sum(w, content, nb.neighbor, nb.offsets), opt.attention);
}

struct PathAttention {
  ad::Var omega;     // paths x 1 (invalid when beta was fixed)
  ad::Var beta;      // paths x 1
  ad::Var combined;  // rows x d
};

// omega_P = mean over `scope` rows of q0^T tanh(W0 h + b0); beta = softmax(omega);
// combined = sigma(sum_P beta_P h^P). `fixed_beta` skips the omega computation.
inline PathAttention path_attention(const std::vector<ad::Var>& per_path, const std::vector<int>& scope,
                                    const ad::Var& q0, const ad::Var& w0, const ad::Var& b0,
                                    const AggregationOptions& opt = {},
                                    const std::optional<Vector>& fixed_beta = std::nullopt) {
  if (per_path.empty()) throw ValidationError("path attention needs at least one path");
  ad::Tape& tape = *per_path.front().tape();
  PathAttention out;
  if (fixed_beta) {
    if (fixed_beta->size() != static_cast<Eigen::Index>(per_path.size())) throw ValidationError("beta size mismatch");
    out.beta = tape.constant(*fixed_beta);
  } else {
    if (scope.empty()) throw ValidationError("path attention scope is empty");
    std::vector<ad::Var> omegas;
    for (const auto& h : per_path) {
      ad::Var rows = ad::gather_rows(h, scope);
      ad::Var proj = ad::tanh(ad::add_row(ad::matmul_nt(rows, w0), b0));
      omegas.push_back(ad::mean(ad::matmul(proj, q0)));
    }
    out.omega = omegas.size() == 1 ? omegas.front() : ad::concat_rows(omegas);
    out.beta = ad::segment_softmax(out.omega, {0, static_cast<int>(per_path.size())}, {});
  }
  ad::Var acc = ad::scale_by(per_path.front(), ad::slice_rows(out.beta, 0, 1));
  for (std::size_t p = 1; p < per_path.size(); ++p) {
    acc = ad::add(acc, ad::scale_by(per_path[p], ad::slice_rows(out.beta, static_cast<Eigen::Index>(p), 1)));
  }
  out.combined = activate(acc, opt.attention);
  return out;
}

// H^{l+1} = sigma(A H^l W^l) for every layer.
inline ad::Var gcn_forward(const SparseMatrix& a_hat, const ad::Var& h0, const std::vector<ad::Var>& weights,
                           const AggregationOptions& opt = {}) {
  if (a_hat.rows() != h0.rows() || a_hat.cols() != h0.rows()) {
    throw ValidationError("adjacency is " + std::to_string(a_hat.rows()) + "x" + std::to_string(a_hat.cols()) +
                          " but features have " + std::to_string(h0.rows()) + " rows");
  }
  if (weights.empty()) throw ValidationError("gcn needs at least one layer");
  ad::Var h = h0;
  for (const auto& w : weights) {
    if (w.rows() != h.cols() || w.cols() != h.cols()) throw ValidationError("gcn weight must be d x d");
    h = activate(ad::spmm(a_hat, ad::matmul(h, w)), opt.gcn);
  }
  return h;
}

// ---- value-level entry points --------------------------------------------------------

// One weight per occurrence of `nb`, in occurrence order.
inline std::vector<double> node_attention_weights(const MetaPathNeighborhood& nb, const Matrix& content,
                                                  const Vector& a_p, double leaky_slope = 0.2) {
  PathNeighborhoods flat;
  flat.path = nb.path;
  flat.add(nb);
  ad::Tape tape;
  const Matrix& w = node_attention(tape.constant(content), flat, tape.constant(a_p), leaky_slope).value();
  std::vector<double> per_node(static_cast<std::size_t>(content.rows()), 0.0);
  std::vector<double> count(static_cast<std::size_t>(content.rows()), 0.0);
  for (std::size_t k = 0; k < flat.neighbor.size(); ++k) {
    per_node[static_cast<std::size_t>(flat.neighbor[k])] = w(static_cast<Eigen::Index>(k), 0);
    count[static_cast<std::size_t>(flat.neighbor[k])] = flat.multiplicity[k];
  }
  std::vector<double> out;
  for (const auto& o : nb.occurrences) {
    const auto n = static_cast<std::size_t>(o.node);
    out.push_back(per_node[n] / count[n]);
  }
  return out;
}

inline Vector aggregate_path(const MetaPathNeighborhood& nb, const Matrix& content, const Vector& a_p,
                             const AggregationOptions& opt = {}) {
  PathNeighborhoods flat;
  flat.path = nb.path;
  flat.add(nb);
  ad::Tape tape;
  return aggregate_path(tape.constant(content), flat, tape.constant(a_p), opt).value().transpose();
}

struct PathAttentionResult {
  Vector omega;
  Vector beta;
  Matrix combined;
};

// Every row of each per-path matrix is in scope.
inline PathAttentionResult path_attention(const std::vector<Matrix>& per_path, const Vector& q0, const Matrix& w0,
                                          const RowVector& b0, const AggregationOptions& opt = {}) {
  ad::Tape tape;
  std::vector<ad::Var> hs;
  for (const auto& h : per_path) hs.push_back(tape.constant(h));
  std::vector<int> scope(static_cast<std::size_t>(per_path.front().rows()));
  for (std::size_t i = 0; i < scope.size(); ++i) scope[i] = static_cast<int>(i);
  auto r = path_attention(hs, scope, tape.constant(q0), tape.constant(w0), tape.constant(b0), opt);
  return {r.omega.value(), r.beta.value(), r.combined.value()};
}

inline Matrix gcn_forward(const SparseMatrix& a_hat, const Matrix& h0, const std::vector<Matrix>& weights,
                          const AggregationOptions& opt = {}) {
  ad::Tape tape;
  std::vector<ad::Var> ws;
  for (const auto& w : weights) ws.push_back(tape.constant(w));
  return gcn_forward(a_hat, tape.constant(h0), ws, opt).value();
}

}  // namespace lakescout
