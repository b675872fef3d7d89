#pragma once

#include "aggregation.hpp"
#include "autodiff.hpp"
#include "binary_io.hpp"
#include "corpus.hpp"
#include "encoder.hpp"
#include "featurizer.hpp"
#include "graph.hpp"
#include "params.hpp"

#include <json.hpp>

#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

namespace lakescout {

inline constexpr std::size_t kFullGraphLimit = 5000;
inline constexpr std::size_t kNeighborCap = 50;

inline std::size_t neighbor_cap_for(const HeteroGraph& g) { return g.num_nodes() > kFullGraphLimit ? kNeighborCap : 0; }

inline EncoderInput encoder_input_for(const DataLake& lake, const TextFeaturizer& f) {
  std::vector<ContentSet> s, t;
  for (const auto& x : lake.statements) s.push_back(extract_content_set(x, f));
  for (const auto& x : lake.tables) t.push_back(extract_content_set(x, f));
  return prepare_encoder_input(s, t, f.dim());
}

inline void check_graph_matches(const DataLake& lake, const HeteroGraph& g) {
  bool ok = lake.statements.size() == g.num_statements() && lake.tables.size() == g.num_tables();
  for (std::size_t i = 0; ok && i < lake.statements.size(); ++i) ok = lake.statements[i].id == g.statement_ids()[i];
  for (std::size_t i = 0; ok && i < lake.tables.size(); ++i) ok = lake.tables[i].id == g.table_ids()[i];
  if (!ok) throw ValidationError("graph node ids do not match the data lake");
}

struct ForwardOutput {
  ad::Var content;  // N x d
  ad::Var h_sts;    // N x d
  ad::Var h_tst;
  ad::Var beta;     // 2 x 1
  ad::Var h_meta;   // N x d, meta-path view
  ad::Var h_gcn;    // N x d, r-hop view (invalid when skipped)
};

// Full-graph forward. Path-level attention averages over `scope`.
inline ForwardOutput model_forward(const ModelT<ad::Var>& m, const EncoderInput& input, const GraphContext& ctx,
                                   const std::vector<int>& scope, const AggregationOptions& opt = {},
                                   bool with_gcn = true) {
  ad::Tape& tape = *m.q0.tape();
  if (input.num_statements != ctx.graph->num_statements() || input.num_tables != ctx.graph->num_tables()) {
    throw ValidationError("encoder input does not match the graph");
  }
  ForwardOutput out;
  out.content = encode_nodes(tape, m, input);
  out.h_sts = aggregate_path(out.content, ctx.sts, m.a_sts, opt);
  out.h_tst = aggregate_path(out.content, ctx.tst, m.a_tst, opt);
  auto pa = path_attention({out.h_sts, out.h_tst}, scope, m.q0, m.w0, m.b0, opt);
  out.beta = pa.beta;
  out.h_meta = pa.combined;
  if (with_gcn) out.h_gcn = gcn_forward(ctx.graph->normalized_adjacency(), out.content, m.gcn, opt);
  return out;
}

inline std::vector<int> all_nodes(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Frozen node representations: unit rows in unified order (statements, then tables).
struct EmbeddingTable {
  std::vector<std::string> statement_ids;
  std::vector<std::string> table_ids;
  Matrix rows;  // (S + T) x d
  Vector beta;  // path weights over all nodes, S-T-S then T-S-T

  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
  std::size_t count() const { return static_cast<std::size_t>(rows.rows()); }
  Vector statement(std::size_t i) const { return rows.row(static_cast<Eigen::Index>(i)).transpose(); }
  Vector table(std::size_t i) const {
    return rows.row(static_cast<Eigen::Index>(statement_ids.size() + i)).transpose();
  }
  Matrix table_block() const {
    return rows.bottomRows(static_cast<Eigen::Index>(table_ids.size()));
  }

  bool operator==(const EmbeddingTable& o) const {
    return statement_ids == o.statement_ids && table_ids == o.table_ids && rows.rows() == o.rows.rows() &&
           rows.cols() == o.rows.cols() && rows == o.rows && beta.size() == o.beta.size() && beta == o.beta;
  }
};

inline Matrix unit_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
  return m;
}

// Meta-path embeddings of every node with path weights computed over all nodes, then
// L2-normalized and rounded to float precision (the on-disk form).
inline EmbeddingTable materialize_embeddings(const ModelParams& params, const HeteroGraph& g, const EncoderInput& input,
                                             const AggregationOptions& opt = {}) {
  const GraphContext ctx = make_graph_context(g, opt.neighbor_cap ? opt.neighbor_cap : neighbor_cap_for(g));
  ad::Tape tape;
  auto m = bind_constant(tape, params);
  auto f = model_forward(m, input, ctx, all_nodes(g.num_nodes()), opt, false);
  EmbeddingTable t;
  t.statement_ids = g.statement_ids();
  t.table_ids = g.table_ids();
  t.rows = unit_rows(f.h_meta.value()).cast<float>().cast<double>();
  t.beta = f.beta.value().col(0).cast<float>().cast<double>();
  return t;
}

inline constexpr int kEmbeddingsVersion = 1;

inline void save_embeddings(const EmbeddingTable& t, const std::filesystem::path& p) {
  nlohmann::ordered_json h;
  h["kind"] = "embeddings";
  h["version"] = kEmbeddingsVersion;
  h["dim"] = t.dim();
  h["count"] = t.count();
  h["ordering"] = "statements-then-tables";
  h["statements"] = t.statement_ids;
  h["tables"] = t.table_ids;
  binio::write(p, h, {binio::float_block("rows", t.rows), binio::float_block("beta", t.beta)});
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& p) {
  auto d = binio::read(p, "embeddings", kEmbeddingsVersion);
  EmbeddingTable t;
  try {
    t.statement_ids = d.manifest.at("statements").get<std::vector<std::string>>();
    t.table_ids = d.manifest.at("tables").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": bad embeddings header: " + e.what());
  }
  t.rows = binio::to_matrix(d.block("rows"));
  t.beta = binio::to_matrix(d.block("beta")).col(0);
  if (t.count() != t.statement_ids.size() + t.table_ids.size() ||
      t.dim() != d.manifest.value("dim", std::size_t{0})) {
    throw ValidationError(p.string() + ": embedding header does not match the data block");
  }
  return t;
}

}  // namespace lakescout
