#pragma once

#include "adam.hpp"
#include "aggregation.hpp"
#include "annindex.hpp"
#include "binary_io.hpp"
#include "corpus.hpp"
#include "encoder.hpp"
#include "error.hpp"
#include "featurizer.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "objectives.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "text.hpp"
#include "trainer.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace lakescout {

enum class Modality { Nl, Table };

inline const char* to_string(Modality m) { return m == Modality::Nl ? "nl" : "table"; }

struct Query {
  std::variant<NLStatement, Table> payload;

  Modality modality() const { return std::holds_alternative<NLStatement>(payload) ? Modality::Nl : Modality::Table; }
  const std::string& id() const {
    return modality() == Modality::Nl ? std::get<NLStatement>(payload).id : std::get<Table>(payload).id;
  }
};

// Statement JSON record {"id", "text"} or a table CSV (id from the file stem).
inline Query read_query_file(const std::filesystem::path& p, bool has_header = true) {
  const std::string text = io::read_file(p);
  if (p.extension() == ".csv") return {parse_table_csv(p.stem().string(), text, has_header, p.string())};
  try {
    auto j = nlohmann::json::parse(text);
    return {NLStatement{j.at("id").get<std::string>(), j.at("text").get<std::string>()}};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": expected a statement record {\"id\", \"text\"}: " + e.what());
  }
}

struct RankedResult {
  std::vector<ScoredId> tables;  // score descending
};

struct BinaryResult {
  std::vector<ScoredId> tables;  // classifier probability, in candidate order
  std::size_t candidates = 0;
};

// Frozen state for embedding queries: content embeddings of every graph node, the path
// weights, a BM25 index over the statements and the table similarity scorer.
class RetrievalEngine {
 public:
  RetrievalEngine(const DataLake& lake, const HeteroGraph& graph, ModelParams params, Vector beta,
                  const TextFeaturizer& featurizer, const TableSimilarityScorer& scorer, GraphConfig config = {})
      : lake_(&lake),
        graph_(&graph),
        params_(std::move(params)),
        beta_(std::move(beta)),
        featurizer_(&featurizer),
        scorer_(&scorer),
        config_(config),
        bm25_(tokenize_statements(lake.statements), config.bm25) {
    check_graph_matches(lake, graph);
    if (feature_dim(params_) != featurizer.dim()) throw ValidationError("featurizer dimension does not match model");
    ad::Tape tape;
    auto m = bind_constant(tape, params_);
    content_ = encode_nodes(tape, m, encoder_input_for(lake, featurizer)).value();
  }

  const HeteroGraph& graph() const { return *graph_; }
  const Matrix& content() const { return content_; }

  // Graph nodes the query attaches to: top-K same-modality peers by BM25 (statements) or
  // by the table scorer (tables). `exclude_id` drops a corpus item with that id.
  std::vector<int> similar_nodes(const Query& q, const std::optional<std::string>& exclude_id = std::nullopt) const {
    const LakeIndex idx(*lake_);
    std::vector<double> scores;
    int self = -1;
    int base = 0;
    if (q.modality() == Modality::Nl) {
      scores = bm25_.score_all(tokenize(std::get<NLStatement>(q.payload).text));
      if (exclude_id) {
        if (auto i = idx.statement(*exclude_id)) self = static_cast<int>(*i);
      }
    } else {
      scores = scorer_->score_all(std::get<Table>(q.payload), lake_->tables);
      if (exclude_id) {
        if (auto i = idx.table(*exclude_id)) self = static_cast<int>(*i);
      }
      base = static_cast<int>(graph_->num_statements());
    }
    std::vector<int> out;
    for (const auto& p : select_top_k(scores, self, config_.k)) out.push_back(base + p.index);
    return out;
  }

  // Unit embedding of a query attached transiently to the graph; the graph is not modified.
  Vector embed_query(const Query& q, const std::optional<std::string>& exclude_id = std::nullopt) const {
    const Modality mod = q.modality();
    ContentSet cs;
    if (mod == Modality::Nl) {
      const auto& s = std::get<NLStatement>(q.payload);
      if (trim(s.text).empty()) throw ValidationError("query text is empty");
      cs = extract_content_set(s, *featurizer_);
    } else {
      const auto& t = std::get<Table>(q.payload);
      if (t.columns.empty()) throw ValidationError("query table has no columns");
      cs = extract_content_set(t, *featurizer_);
    }
    const NodeType type = mod == Modality::Nl ? NodeType::Statement : NodeType::Table;
    const Vector hc = encode(cs, params_, type);

    std::set<int> links;
    for (int peer : similar_nodes(q, exclude_id)) {
      for (int l : graph_->st_links(peer)) links.insert(l);
    }
    const std::vector<int> link_list(links.begin(), links.end());
    const int self = static_cast<int>(graph_->num_nodes());
    const std::size_t cap = neighbor_cap_for(*graph_);

    Matrix ext(content_.rows() + 1, content_.cols());
    ext.topRows(content_.rows()) = content_;
    ext.row(self) = hc.transpose();
    ad::Tape tape;
    auto m = bind_constant(tape, params_);
    ad::Var h = tape.constant(ext);
    std::vector<ad::Var> per_path;
    for (MetaPath p : kMetaPaths) {
      PathNeighborhoods flat;
      flat.path = p;
      flat.add(enumerate_metapath_neighbors(*graph_, p, self, type, std::span<const int>(link_list), cap));
      per_path.push_back(aggregate_path(h, flat, p == MetaPath::STS ? m.a_sts : m.a_tst));
    }
    auto pa = path_attention(per_path, {}, m.q0, m.w0, m.b0, {}, beta_);
    Vector out = pa.combined.value().transpose();
    const double n = out.norm();
    if (n > 0.0) out /= n;
    return out;
  }

 private:
  const DataLake* lake_;
  const HeteroGraph* graph_;
  ModelParams params_;
  Vector beta_;
  const TextFeaturizer* featurizer_;
  const TableSimilarityScorer* scorer_;
  GraphConfig config_;
  Bm25Index bm25_;
  Matrix content_;
};

inline RankedResult rank_tables(const Vector& h_q, const AnnIndex& index, std::size_t k,
                                std::size_t search_breadth_factor = 10) {
  if (k == 0) throw ValidationError("k must be at least 1");
  return {index.query(h_q, k, search_breadth_factor * k)};
}

// ---- relevance classifier ------------------------------------------------------------

struct RelevanceClassifier {
  MlpParams mlp;
  double train_f1 = 0.0;
  double validation_f1 = 0.0;

  double probability(const Vector& h_q, const Vector& h_t) const { return decode_edge(h_q, h_t, mlp); }
};

inline std::size_t candidate_count(double fraction, std::size_t num_tables) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("candidate fraction must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_tables) - 1e-9));
  return std::clamp<std::size_t>(n, 1, num_tables);
}

// Top ceil(fraction * |T|) tables by cosine, then those the classifier scores above 0.5.
template <class Classifier>
BinaryResult binary_retrieve(const Vector& h_q, const AnnIndex& index, const Classifier& classifier,
                             double candidate_fraction, std::size_t search_breadth_factor = 10) {
  const std::size_t n = candidate_count(candidate_fraction, index.count());
  const auto cands = index.query(h_q, n, search_breadth_factor * n);
  std::map<std::string, int> row;
  for (std::size_t i = 0; i < index.count(); ++i) row[index.ids()[i]] = static_cast<int>(i);
  BinaryResult out;
  out.candidates = cands.size();
  for (const auto& c : cands) {
    const Vector h_t = index.vectors().row(row.at(c.id)).transpose();
    const double p = classifier.probability(h_q, h_t);
    if (p > 0.5) out.tables.push_back({c.id, p});
  }
  return out;
}

// A labelled (query row, table row) pair over an embedding matrix.
struct LabelledPair {
  int query = 0;
  int table = 0;
  double label = 0.0;
};

namespace detail {

inline std::vector<LabelledPair> labelled_pairs(const EmbeddingTable& emb, const std::vector<LabelPair>& labels,
                                                const std::set<std::string>& statements, std::size_t neg_ratio,
                                                Rng& rng) {
  std::map<std::string, int> srow, trow;
  for (std::size_t i = 0; i < emb.statement_ids.size(); ++i) srow[emb.statement_ids[i]] = static_cast<int>(i);
  const int S = static_cast<int>(emb.statement_ids.size());
  for (std::size_t i = 0; i < emb.table_ids.size(); ++i) trow[emb.table_ids[i]] = S + static_cast<int>(i);
  std::map<int, std::set<int>> gold;
  for (const auto& [s, t] : labels) {
    if (!statements.count(s)) continue;
    auto si = srow.find(s);
    auto ti = trow.find(t);
    if (si == srow.end() || ti == trow.end()) throw ValidationError("label (" + s + ", " + t + ") not in embedding table");
    gold[si->second].insert(ti->second);
  }
  std::vector<LabelledPair> out;
  for (const auto& [q, ts] : gold) {
    std::vector<int> non;
    for (int t = S; t < S + static_cast<int>(emb.table_ids.size()); ++t) {
      if (!ts.count(t)) non.push_back(t);
    }
    for (int t : ts) {
      out.push_back({q, t, 1.0});
      for (std::size_t i = 0; i < neg_ratio && !non.empty(); ++i) out.push_back({q, non[rng.below(non.size())], 0.0});
    }
  }
  return out;
}

inline Vector pair_probabilities(const Matrix& rows, const std::vector<LabelledPair>& pairs, const MlpParams& mlp) {
  Matrix a(static_cast<Eigen::Index>(pairs.size()), rows.cols()), b(static_cast<Eigen::Index>(pairs.size()), rows.cols());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = rows.row(pairs[i].query);
    b.row(static_cast<Eigen::Index>(i)) = rows.row(pairs[i].table);
  }
  return decode_edges(a, b, mlp);
}

inline double pairs_f1(const Matrix& rows, const std::vector<LabelledPair>& pairs, const MlpParams& mlp) {
  if (pairs.empty()) return 0.0;
  const Vector p = pair_probabilities(rows, pairs, mlp);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool pred = p(static_cast<Eigen::Index>(i)) > 0.5, gold = pairs[i].label > 0.5;
    tp += pred && gold;
    fp += pred && !gold;
    fn += !pred && gold;
  }
  return f1_score(tp, fp, fn);
}

}  // namespace detail

struct ClassifierConfig {
  std::size_t epochs = 200;
  std::size_t negative_ratio = 4;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

// Full-batch BCE over the labelled pairs with Adam.
inline RelevanceClassifier train_relevance_classifier(const Matrix& rows, const std::vector<LabelledPair>& train_pairs,
                                                      const std::vector<LabelledPair>& validation_pairs,
                                                      const ClassifierConfig& config) {
  std::size_t positives = 0;
  for (const auto& p : train_pairs) positives += p.label > 0.5;
  if (positives == 0) throw ValidationError("relevance classifier needs at least one positive label");
  Rng rng(Rng::derive(config.seed, 20));
  RelevanceClassifier c;
  c.mlp = init_mlp(static_cast<std::size_t>(rows.cols()), rng);
  auto visit = [](auto&& f, auto&... xs) { visit_mlp_tensors(f, xs...); };
  Adam<MlpParams> adam(c.mlp, {config.learning_rate, 0.9, 0.999, 1e-8}, visit);
  EdgePairs pos, neg;
  for (const auto& p : train_pairs) {
    EdgePairs& dst = p.label > 0.5 ? pos : neg;
    dst.u.push_back(p.query);
    dst.v.push_back(p.table);
  }
  for (std::size_t e = 0; e < config.epochs; ++e) {
    ad::Tape tape;
    auto m = bind(tape, c.mlp);
    ad::Var h = tape.constant(rows);
    ad::Var loss = ad::mean(ad::log(ad::clamp(
        decode_pairs(ad::gather_rows(h, pos.u), ad::gather_rows(h, pos.v), m), kProbabilityClamp, 1.0 - kProbabilityClamp)));
    double n_pos = static_cast<double>(pos.size()), n_neg = static_cast<double>(neg.size());
    ad::Var total = ad::scale(loss, -n_pos / (n_pos + n_neg));
    if (neg.size() > 0) {
      ad::Var pn = ad::clamp(decode_pairs(ad::gather_rows(h, neg.u), ad::gather_rows(h, neg.v), m), kProbabilityClamp,
                             1.0 - kProbabilityClamp);
      total = ad::sub(total, ad::scale(ad::mean(ad::log(ad::add_scalar(ad::scale(pn, -1.0), 1.0))), n_neg / (n_pos + n_neg)));
    }
    if (!std::isfinite(total.scalar())) throw RuntimeFailure("non-finite classifier loss at epoch " + std::to_string(e + 1));
    tape.backward(total);
    MlpParams g = gradients(m);
    adam.step(c.mlp, g, visit);
  }
  round_to_float(c.mlp);
  c.train_f1 = detail::pairs_f1(rows, train_pairs, c.mlp);
  c.validation_f1 = detail::pairs_f1(rows, validation_pairs, c.mlp);
  return c;
}

// Positives are the labels of `train_statements`; four sampled non-relevant tables per
// positive (by default). Validation F1 is measured the same way on `validation_statements`.
inline RelevanceClassifier train_relevance_classifier(const EmbeddingTable& emb, const std::vector<LabelPair>& labels,
                                                      const std::vector<std::string>& train_statements,
                                                      const std::vector<std::string>& validation_statements,
                                                      const ClassifierConfig& config) {
  Rng rng(Rng::derive(config.seed, 21));
  const std::set<std::string> tr(train_statements.begin(), train_statements.end());
  const std::set<std::string> va(validation_statements.begin(), validation_statements.end());
  auto train_pairs = detail::labelled_pairs(emb, labels, tr, config.negative_ratio, rng);
  auto val_pairs = detail::labelled_pairs(emb, labels, va, config.negative_ratio, rng);
  return train_relevance_classifier(emb.rows, train_pairs, val_pairs, config);
}

inline constexpr int kClassifierVersion = 1;

inline void save_classifier(const RelevanceClassifier& c, const std::filesystem::path& p) {
  nlohmann::ordered_json h;
  h["kind"] = "classifier";
  h["version"] = kClassifierVersion;
  h["train_f1"] = c.train_f1;
  h["validation_f1"] = c.validation_f1;
  std::vector<binio::Block> blocks;
  MlpParams copy = c.mlp;
  visit_mlp_tensors([&](const std::string& name, Matrix& m) { blocks.push_back(binio::float_block(name, m)); }, copy);
  binio::write(p, h, blocks);
}

inline RelevanceClassifier load_classifier(const std::filesystem::path& p) {
  auto d = binio::read(p, "classifier", kClassifierVersion);
  RelevanceClassifier c;
  c.train_f1 = d.manifest.value("train_f1", 0.0);
  c.validation_f1 = d.manifest.value("validation_f1", 0.0);
  visit_mlp_tensors([&](const std::string& name, Matrix& m) { m = binio::to_matrix(d.block(name)); }, c.mlp);
  return c;
}

inline nlohmann::ordered_json result_record(const std::string& query_id, const char* mode,
                                            const std::vector<ScoredId>& tables) {
  nlohmann::ordered_json j;
  j["query_id"] = query_id;
  j["mode"] = mode;
  j["results"] = nlohmann::ordered_json::array();
  for (const auto& t : tables) j["results"].push_back({{"table_id", t.id}, {"score", t.score}});
  return j;
}

}  // namespace lakescout
