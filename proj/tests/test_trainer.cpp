#include <catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "lakescout.hpp"
#include "test_util.hpp"

#include <map>

using namespace lakescout;

namespace {

struct Fixture {
  DataLake lake;
  Split split;
  HashingFeaturizer featurizer{16, 0};
  std::unique_ptr<ContentCosineScorer> scorer;
  HeteroGraph graph;
  Hyperparams hyper;

  Fixture() {
    SyntheticSpec spec;
    spec.n_clusters = 3;
    spec.tables_per_cluster = 4;
    spec.statements_per_cluster = 10;
    spec.vocab_size = 60;
    spec.seed = 3;
    lake = generate_synthetic_lake(spec);
    split = lakescout::split(lake, SplitSpec{0.2, 0.2, 0.6, 1});
    scorer = std::make_unique<ContentCosineScorer>(featurizer);
    graph = build_graph(lake, split, *scorer, GraphConfig{3, {}});
    hyper.d = 8;
    hyper.d_c = 16;
    hyper.k = 3;
    hyper.epochs = 6;
    hyper.negatives_per_anchor = 4;
    hyper.batch_size = 8;
    hyper.learning_rate = 5e-3;
    hyper.seed = 9;
  }
};

bool same_params(ModelParams a, ModelParams b) {
  bool same = true;
  visit_tensors([&](const std::string&, Matrix& x, Matrix& y) { same = same && x == y; }, a, b);
  return same;
}

double binomial_below(std::size_t n, double p, std::size_t k) {
  // P(X < k) for X ~ Binomial(n, p).
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    total += std::exp(log_c + static_cast<double>(i) * std::log(p) + static_cast<double>(n - i) * std::log1p(-p));
  }
  return total;
}

}  // namespace

// ---- sampling ----------------------------------------------------------------------

TEST_CASE("contrastive negatives truncate to the type size", "[trainer]") {
  const std::vector<int> nodes = {0, 1, 2, 3, 4};
  const std::vector<NodeType> types(5, NodeType::Statement);
  const auto a = sample_contrastive_negatives(nodes, types, 16, std::uint64_t{1});
  for (const auto& an : a) {
    CHECK(an.negatives.size() == 4);
    CHECK(std::find(an.negatives.begin(), an.negatives.end(), an.node) == an.negatives.end());
  }
  const auto b = sample_contrastive_negatives(nodes, types, 16, std::uint64_t{1});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].negatives == b[i].negatives);
}

TEST_CASE("contrastive negatives stay within the anchor type", "[trainer]") {
  const std::vector<int> nodes = {0, 1, 2, 10, 11};
  const std::vector<NodeType> types = {NodeType::Statement, NodeType::Statement, NodeType::Statement, NodeType::Table,
                                       NodeType::Table};
  for (const auto& an : sample_contrastive_negatives(nodes, types, 3, std::uint64_t{2})) {
    for (int n : an.negatives) CHECK((n >= 10) == (an.node >= 10));
  }
  const auto lone = sample_contrastive_negatives({0, 10}, {NodeType::Statement, NodeType::Table}, 3, std::uint64_t{2});
  CHECK(lone[0].negatives.empty());
  CHECK(lone[1].negatives.empty());
}

TEST_CASE("contrastive negatives are uniform over the other nodes", "[trainer]") {
  const std::vector<int> nodes = {0, 1, 2, 3, 4, 5};
  const std::vector<NodeType> types(6, NodeType::Table);
  Rng rng(7);
  std::map<int, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto anchors = sample_contrastive_negatives(nodes, types, 2, rng);
    for (int n : anchors[0].negatives) ++counts[n];
  }
  CHECK(counts.count(0) == 0);
  const double expected = draws * 2.0 / 5.0;
  for (int n = 1; n <= 5; ++n) CHECK(std::abs(counts[n] - expected) <= 0.05 * expected);
}

TEST_CASE("masking with ratio near one keeps nearly every edge", "[trainer]") {
  std::vector<std::string> s, t;
  std::vector<Edge> st;
  for (int i = 0; i < 100; ++i) {
    s.push_back("s" + std::to_string(i));
    t.push_back("t" + std::to_string(i));
    st.push_back({i, i, 1.0});
  }
  const HeteroGraph g(s, t, st, {}, {});
  // Oracle bound: P(|E_m| < 95) at p = 0.999 is far below 0.01.
  CHECK(binomial_below(100, 0.999, 95) < 0.01);
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto batch = sample_edge_batches(g, all_nodes(200), 0.999, rng);
    ok += batch.masked.size() >= 95;
    REQUIRE(batch.negatives.size() == batch.masked.size());
  }
  CHECK(ok >= 99);
}

TEST_CASE("negative edges are type-matched and unconnected", "[trainer]") {
  const HeteroGraph g = gradcheck::eight_node_graph();
  const int S = 4;
  std::set<NodePair> connected;
  for (const auto& e : g.edges_st()) connected.insert({e.u, S + e.v});
  for (const auto& e : g.edges_ss()) connected.insert({e.u, e.v});
  for (const auto& e : g.edges_tt()) connected.insert({S + e.u, S + e.v});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto batch = sample_edge_batches(g, all_nodes(8), 0.5, rng);
    REQUIRE_FALSE(batch.masked.empty());
    for (std::size_t i = 0; i < batch.masked.size(); ++i) {
      const auto& m = batch.masked[i];
      const auto& n = batch.negatives[i];
      CHECK(connected.count(m) == 1);
      CHECK(connected.count(n) == 0);
      CHECK(n.u < n.v);
      CHECK((m.u < S) == (n.u < S));
      CHECK((m.v < S) == (n.v < S));
    }
  }
}

TEST_CASE("edge sampling fails explicitly when it cannot proceed", "[trainer]") {
  Rng rng(1);
  // Every statement-table pair connected: no unconnected negative exists.
  const HeteroGraph full({"s0"}, {"t0", "t1"}, {{0, 0, 1.0}, {0, 1, 1.0}}, {}, {{0, 1, 1.0}});
  CHECK_THROWS_AS(sample_edge_batches(full, all_nodes(3), 0.9, rng), RuntimeFailure);
  const HeteroGraph empty({"s0"}, {"t0"}, {}, {}, {});
  CHECK_THROWS_AS(sample_edge_batches(empty, all_nodes(2), 0.5, rng), RuntimeFailure);
}

TEST_CASE("masked edges are hidden from the training view", "[trainer]") {
  const HeteroGraph g = gradcheck::eight_node_graph();
  const HeteroGraph view = without_edges(g, {{0, 5}, {4, 5}});
  CHECK(view.edges_st().size() == g.edges_st().size() - 1);
  CHECK(view.edges_tt().empty());
  CHECK(view.edges_ss() == g.edges_ss());
}

// ---- optimizer ---------------------------------------------------------------------

TEST_CASE("adam follows the reference update on a scalar quadratic", "[trainer]") {
  struct P {
    EncoderMode mode = EncoderMode::Linear;
    Matrix x;
  };
  auto visit = [](auto&& f, auto&... ps) { f("x", ps.x...); };
  P p{EncoderMode::Linear, Matrix::Constant(1, 1, 2.0)};
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  Adam<P> adam(p, cfg, visit);
  double x = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 25; ++t) {
    // f(x) = 3 (x - 1)^2
    P g{EncoderMode::Linear, Matrix::Constant(1, 1, 6.0 * (p.x(0, 0) - 1.0))};
    adam.step(p, g, visit);
    const double grad = 6.0 * (x - 1.0);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.x(0, 0) == Catch::Approx(x).margin(1e-14));
  }
  CHECK(std::abs(p.x(0, 0) - 1.0) < std::abs(2.0 - 1.0));
}

// ---- training ----------------------------------------------------------------------

TEST_CASE("loss falls on a six-node toy graph", "[trainer]") {
  const HeteroGraph g({"s0", "s1", "s2"}, {"t0", "t1", "t2"}, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}},
                      {{0, 1, 0.5}}, {{1, 2, 0.5}});
  TrainingData data;
  data.graph = &g;
  data.input = gradcheck::random_input(3, 3, 4, 5);
  data.training_nodes = all_nodes(6);
  Hyperparams h;
  h.d = 6;
  h.d_c = 4;
  h.beta = 0.0;
  h.lambda = 1.0;
  h.negatives_per_anchor = 1;
  h.epochs = 20;
  h.learning_rate = 1e-2;
  h.mask_ratio = 0.5;
  const TrainResult r = train(data, h);
  REQUIRE(r.trace.size() == 20);
  CHECK(r.trace.back().loss < r.trace.front().loss);
  // Without validation pairs the selection score is the negated loss.
  CHECK(r.trace.front().validation_score == -r.trace.front().loss);
}

TEST_CASE("zero learning rate leaves parameters untouched", "[trainer]") {
  Fixture f;
  f.hyper.learning_rate = 0.0;
  f.hyper.epochs = 3;
  f.hyper.negatives_per_anchor = 100;  // every same-type node each epoch
  f.hyper.batch_size = 1000;
  const TrainResult r = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  CHECK(same_params(r.final_params, init_model(f.hyper.dims(), Rng::derive(f.hyper.seed, kStreamInit))));
  for (const auto& e : r.trace) CHECK(e.loss == Catch::Approx(r.trace.front().loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a seed", "[trainer]") {
  Fixture f;
  const TrainResult a = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  const TrainResult b = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss == b.trace[i].loss);
    CHECK(a.trace[i].validation_score == b.trace[i].validation_score);
  }
  CHECK(a.best.epoch == b.best.epoch);
  CHECK(same_params(a.best.params, b.best.params));
  f.hyper.seed = 10;
  const TrainResult c = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  CHECK(c.trace.front().loss != a.trace.front().loss);
}

TEST_CASE("best checkpoint has the top validation score, earliest on ties", "[trainer]") {
  Fixture f;
  const TrainResult r = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  REQUIRE(r.best.epoch >= 1);
  const double best = r.trace[r.best.epoch - 1].validation_score;
  CHECK(best == r.best.validation_score);
  for (const auto& e : r.trace) {
    CHECK(best >= e.validation_score);
    if (e.epoch < r.best.epoch) CHECK(e.validation_score < best);
  }
}

TEST_CASE("held-out labels never reach the gradients", "[trainer]") {
  Fixture f;
  const TrainResult base = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  // Rewire every validation and test label to a different table.
  DataLake altered = f.lake;
  std::set<std::string> held(f.split.statements.val.begin(), f.split.statements.val.end());
  held.insert(f.split.statements.test.begin(), f.split.statements.test.end());
  for (auto& [s, t] : altered.nl_table_labels) {
    if (held.count(s)) t = t == "t0000" ? "t0001" : "t0000";
  }
  std::sort(altered.nl_table_labels.begin(), altered.nl_table_labels.end());
  altered.nl_table_labels.erase(std::unique(altered.nl_table_labels.begin(), altered.nl_table_labels.end()),
                                altered.nl_table_labels.end());
  const HeteroGraph g2 = build_graph(altered, f.split, *f.scorer, GraphConfig{3, {}});
  CHECK(g2 == f.graph);
  const TrainResult r = train(altered, g2, f.split, f.featurizer, f.hyper);
  REQUIRE(r.trace.size() == base.trace.size());
  for (std::size_t i = 0; i < r.trace.size(); ++i) CHECK(r.trace[i].loss == base.trace[i].loss);
  CHECK(same_params(r.final_params, base.final_params));
}

TEST_CASE("non-finite training aborts with a diagnostic", "[trainer]") {
  Fixture f;
  f.hyper.learning_rate = 1e200;
  f.hyper.epochs = 5;
  CHECK_THROWS_AS(train(f.lake, f.graph, f.split, f.featurizer, f.hyper), RuntimeFailure);
}

TEST_CASE("training rejects a featurizer of the wrong width", "[trainer]") {
  Fixture f;
  HashingFeaturizer wrong(8, 0);
  CHECK_THROWS_AS(train(f.lake, f.graph, f.split, wrong, f.hyper), ValidationError);
}

// ---- materialization and persistence -------------------------------------------------

TEST_CASE("materialized embeddings are unit rows and reproducible", "[trainer]") {
  Fixture f;
  const TrainResult r = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  const EncoderInput in = encoder_input_for(f.lake, f.featurizer);
  const EmbeddingTable a = materialize_embeddings(r.best.params, f.graph, in);
  const EmbeddingTable b = materialize_embeddings(r.best.params, f.graph, in);
  CHECK(a == b);
  REQUIRE(a.count() == f.graph.num_nodes());
  for (Eigen::Index i = 0; i < a.rows.rows(); ++i) CHECK(a.rows.row(i).norm() == Catch::Approx(1.0).margin(1e-6));
  CHECK(a.beta.sum() == Catch::Approx(1.0).margin(1e-6));

  testutil::TempDir dir("trainer_emb");
  save_embeddings(a, dir.path() / "e.bin");
  CHECK(load_embeddings(dir.path() / "e.bin") == a);
}

TEST_CASE("trained embeddings separate the synthetic clusters", "[trainer]") {
  Fixture f;
  f.hyper.epochs = 30;
  const TrainResult r = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  const EmbeddingTable e = materialize_embeddings(r.best.params, f.graph, encoder_input_for(f.lake, f.featurizer));
  // Tables t0000..t0011, four per cluster.
  double intra = 0.0, inter = 0.0;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = i + 1; j < 12; ++j) {
      const double c = e.table(i).dot(e.table(j));
      if (i / 4 == j / 4) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  }
  CHECK(intra / ni > inter / nx);
}

TEST_CASE("checkpoints round-trip and reject damaged files", "[trainer]") {
  Fixture f;
  f.hyper.epochs = 2;
  const TrainResult r = train(f.lake, f.graph, f.split, f.featurizer, f.hyper);
  testutil::TempDir dir("trainer_ckpt");
  const auto path = dir.path() / "c.bin";
  save_checkpoint(r.best, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(same_params(back.params, r.best.params));
  CHECK(back.epoch == r.best.epoch);
  CHECK(back.validation_score == r.best.validation_score);
  CHECK(back.hyper.seed == f.hyper.seed);
  CHECK(back.hyper.d == f.hyper.d);

  std::string bytes = io::read_file(path);
  io::write_file(dir.path() / "short.bin", bytes.substr(0, bytes.size() - 7));
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "short.bin"), ValidationError);
  bytes[bytes.size() - 3] ^= 0x5a;
  io::write_file(dir.path() / "flip.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "flip.bin"), ValidationError);
  CHECK_THROWS_AS(load_embeddings(path), ValidationError);
}

TEST_CASE("hyperparameters round-trip through json and reject bad values", "[trainer]") {
  Hyperparams h;
  h.d = 32;
  h.encoder = EncoderMode::Linear;
  h.tau = 0.2;
  nlohmann::ordered_json j = h;
  const Hyperparams back = hyperparams_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.d == 32);
  CHECK(back.encoder == EncoderMode::Linear);
  CHECK(back.tau == 0.2);
  CHECK_THROWS_AS(hyperparams_from_json(nlohmann::json{{"no_such_field", 1}}), ValidationError);
  h.tau = 0.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
}
