#include <catch_amalgamated.hpp>

#include "lakescout.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lakescout;

namespace {

struct Trained {
  DataLake lake;
  Split split;
  HashingFeaturizer featurizer{16, 0};
  std::unique_ptr<ContentCosineScorer> scorer;
  HeteroGraph graph;
  GraphConfig gconf{1, {}};
  TrainResult result;
  EmbeddingTable emb;

  explicit Trained(std::size_t k = 1) : gconf{k, {}} {
    SyntheticSpec spec;
    spec.n_clusters = 3;
    spec.tables_per_cluster = 4;
    spec.statements_per_cluster = 10;
    spec.vocab_size = 60;
    spec.seed = 4;
    lake = generate_synthetic_lake(spec);
    split = lakescout::split(lake, SplitSpec{0.2, 0.2, 0.6, 2});
    scorer = std::make_unique<ContentCosineScorer>(featurizer);
    graph = build_graph(lake, split, *scorer, gconf);
    Hyperparams h;
    h.d = 8;
    h.d_c = 16;
    h.k = k;
    h.epochs = 5;
    h.negatives_per_anchor = 4;
    h.learning_rate = 5e-3;
    result = train(lake, graph, split, featurizer, h);
    emb = materialize_embeddings(result.best.params, graph, encoder_input_for(lake, featurizer));
  }

  RetrievalEngine engine() const {
    return RetrievalEngine(lake, graph, result.best.params, emb.beta, featurizer, *scorer, gconf);
  }
};

struct ConstantClassifier {
  double p;
  double probability(const Vector&, const Vector&) const { return p; }
};

AnnIndex small_index(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix v(static_cast<Eigen::Index>(n), 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1.0, 1.0);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("t" + std::to_string(i));
  return AnnIndex::build(ids, v);
}

}  // namespace

TEST_CASE("a query repeating a training statement embeds next to it", "[retrieval]") {
  const Trained t;
  const RetrievalEngine engine = t.engine();
  const LakeIndex idx(t.lake);
  for (const auto& sid : t.split.statements.train) {
    const NLStatement& s = t.lake.statements[*idx.statement(sid)];
    const Vector h = engine.embed_query(Query{NLStatement{"q", s.text}});
    CHECK(h.norm() == Catch::Approx(1.0).margin(1e-9));
    CHECK(oracle::cosine(h, t.emb.statement(*idx.statement(sid))) >= 0.99);
  }
}

TEST_CASE("a query sharing no tokens still embeds through its own content", "[retrieval]") {
  const Trained t;
  const RetrievalEngine engine = t.engine();
  const Query q{NLStatement{"q", "zzqx yyqv"}};
  // BM25 scores are all zero so no peer is attached.
  CHECK(engine.similar_nodes(q).empty());
  const Vector h = engine.embed_query(q);
  CHECK(h.allFinite());
  CHECK(h.norm() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("empty queries are rejected", "[retrieval]") {
  const Trained t;
  const RetrievalEngine engine = t.engine();
  CHECK_THROWS_AS(engine.embed_query(Query{NLStatement{"q", "   "}}), ValidationError);
  CHECK_THROWS_AS(engine.embed_query(Query{Table{"q", std::nullopt, {}}}), ValidationError);
}

TEST_CASE("a duplicated table query ranks the original first", "[retrieval]") {
  const Trained t;
  const RetrievalEngine engine = t.engine();
  const AnnIndex index = AnnIndex::build(t.emb.table_ids, t.emb.table_block());
  std::size_t first = 0;
  for (const auto& table : t.lake.tables) {
    Table copy = table;
    copy.id = "copy";
    const auto r = rank_tables(engine.embed_query(Query{copy}), index, 1);
    REQUIRE(r.tables.size() == 1);
    first += r.tables[0].id == table.id;
  }
  // Every duplicate attaches to its original; all must come back first.
  CHECK(first == t.lake.tables.size());
}

TEST_CASE("ranking with k at least the table count is a permutation", "[retrieval]") {
  const AnnIndex index = small_index(9, 1);
  const auto r = rank_tables(Vector::Ones(4), index, 20);
  std::vector<std::string> ids;
  for (const auto& s : r.tables) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  auto want = index.ids();
  std::sort(want.begin(), want.end());
  CHECK(ids == want);
  for (std::size_t i = 1; i < r.tables.size(); ++i) CHECK(r.tables[i - 1].score >= r.tables[i].score);
  CHECK_THROWS_AS(rank_tables(Vector::Ones(4), index, 0), ValidationError);
}

TEST_CASE("binary retrieval keeps candidates above one half", "[retrieval]") {
  const AnnIndex index = small_index(10, 2);
  const auto all = binary_retrieve(Vector::Ones(4), index, ConstantClassifier{0.9}, 0.5);
  CHECK(all.candidates == 5);
  CHECK(all.tables.size() == 5);
  const auto none = binary_retrieve(Vector::Ones(4), index, ConstantClassifier{0.1}, 0.5);
  CHECK(none.candidates == 5);
  CHECK(none.tables.empty());
  CHECK(binary_retrieve(Vector::Ones(4), index, ConstantClassifier{0.5}, 0.5).tables.empty());
}

TEST_CASE("candidate count rounds up and stays in range", "[retrieval]") {
  CHECK(candidate_count(0.5, 10) == 5);
  CHECK(candidate_count(0.5, 11) == 6);
  CHECK(candidate_count(0.01, 10) == 1);
  CHECK(candidate_count(1.0, 7) == 7);
  CHECK_THROWS_AS(candidate_count(0.0, 7), ValidationError);
  CHECK_THROWS_AS(candidate_count(1.5, 7), ValidationError);
}

TEST_CASE("classifier separates a separable toy problem", "[retrieval]") {
  // Queries 0..3, tables 4..7; query i is relevant to table 4 + i only.
  Matrix rows(8, 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    rows.row(i) = RowVector::Unit(4, i);
    rows.row(4 + i) = RowVector::Unit(4, i);
  }
  std::vector<LabelledPair> pairs;
  for (int q = 0; q < 4; ++q) {
    for (int t = 4; t < 8; ++t) pairs.push_back({q, t, t == q + 4 ? 1.0 : 0.0});
  }
  const ClassifierConfig cfg{400, 4, 2e-2, 5};
  const RelevanceClassifier c = train_relevance_classifier(rows, pairs, pairs, cfg);
  CHECK(c.train_f1 == 1.0);
  CHECK(c.validation_f1 == 1.0);
  const RelevanceClassifier again = train_relevance_classifier(rows, pairs, pairs, cfg);
  CHECK(again.mlp.w1 == c.mlp.w1);
  CHECK(again.mlp.w2 == c.mlp.w2);
  CHECK(again.mlp.b1 == c.mlp.b1);
  CHECK(again.mlp.b2 == c.mlp.b2);

  testutil::TempDir dir("classifier");
  save_classifier(c, dir.path() / "c.bin");
  const RelevanceClassifier back = load_classifier(dir.path() / "c.bin");
  CHECK(back.mlp.w1 == c.mlp.w1);
  CHECK(back.validation_f1 == c.validation_f1);

  std::vector<LabelledPair> negatives_only = {{0, 5, 0.0}};
  CHECK_THROWS_AS(train_relevance_classifier(rows, negatives_only, {}, cfg), ValidationError);
}

TEST_CASE("query files load statements and tables", "[retrieval]") {
  testutil::TempDir dir("query_file");
  io::write_file(dir.path() / "q.json", R"({"id": "q1", "text": "hello world"})");
  io::write_file(dir.path() / "tq.csv", "a,b\n1,2\n");
  const Query s = read_query_file(dir.path() / "q.json");
  CHECK(s.modality() == Modality::Nl);
  CHECK(s.id() == "q1");
  const Query t = read_query_file(dir.path() / "tq.csv");
  CHECK(t.modality() == Modality::Table);
  CHECK(t.id() == "tq");
  CHECK(std::get<Table>(t.payload).columns.size() == 2);
  io::write_file(dir.path() / "bad.json", R"({"text": "x"})");
  CHECK_THROWS_AS(read_query_file(dir.path() / "bad.json"), ValidationError);
}
