#pragma once

#include "annindex.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "featurizer.hpp"
#include "graph.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "retrieval.hpp"
#include "rng.hpp"
#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lakescout {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr std::uint64_t kStreamSubsample = 3;

struct BenchmarkOptions {
  bool ranked = true;
  bool binary = true;
  std::filesystem::path output_dir;
  std::optional<double> train_fraction;  // of all statements; subsamples the train split
  std::vector<std::size_t> ks{1, 5, 10};
  Averaging averaging = Averaging::Micro;
  std::shared_ptr<const TextFeaturizer> featurizer;     // default: hashing, d_c buckets
  std::shared_ptr<const TableSimilarityScorer> scorer;  // default: content cosine
  std::function<void(const std::string&)> log;
};

struct TimingReport {
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  double peak_memory_mb = 0.0;
  double query_ms_raw = 0.0;        // mean embed + retrieve time per query
  double query_ms_amortized = 0.0;  // raw plus materialization and indexing spread over queries
};

struct MetricsReport {
  std::optional<BinaryMetrics> binary;
  std::optional<BinaryMetrics> binary_macro;
  std::vector<RankedMetrics> ranked;
  std::size_t best_epoch = 0;
  double best_validation_score = 0.0;
  double classifier_validation_f1 = 0.0;
  std::size_t train_statements = 0;
  std::size_t test_queries = 0;
  TimingReport timing;

  double ranked_recall(std::size_t k) const {
    for (const auto& r : ranked) {
      if (r.k == k) return r.recall;
    }
    throw ValidationError("no ranked metrics at k = " + std::to_string(k));
  }
};

// Peak resident set size from /proc, 0 when unavailable.
inline double peak_memory_mb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ls(line.substr(6));
      double kb = 0.0;
      ls >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

// Keeps round(fraction * |statements|) of the train statements, at least one.
inline Split subsample_train(Split split, std::size_t num_statements, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("train_fraction must lie in (0, 1]");
  auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(num_statements)));
  n = std::clamp<std::size_t>(n, 1, split.statements.train.size());
  if (n == split.statements.train.size()) return split;
  Rng rng(Rng::derive(seed, kStreamSubsample));
  auto& tr = split.statements.train;
  rng.shuffle(tr);
  tr.resize(n);
  std::sort(tr.begin(), tr.end());
  return split;
}

namespace detail {

inline nlohmann::ordered_json binary_json(const BinaryMetrics& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["queries"] = m.queries;
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json metrics_json(const MetricsReport& r, const Hyperparams& hyper) {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["averaging"] = "micro";
  if (r.binary) {
    j["binary"] = detail::binary_json(*r.binary);
    j["binary_macro"] = detail::binary_json(*r.binary_macro);
  }
  j["ranked"] = nlohmann::ordered_json::array();
  for (const auto& m : r.ranked) {
    j["ranked"].push_back({{"k", m.k}, {"precision", m.precision}, {"recall", m.recall}, {"queries", m.queries}});
  }
  j["best_epoch"] = r.best_epoch;
  j["best_validation_score"] = r.best_validation_score;
  j["classifier_validation_f1"] = r.classifier_validation_f1;
  j["train_statements"] = r.train_statements;
  j["test_queries"] = r.test_queries;
  j["hyperparams"] = hyper;
  j["notes"] = {"binary metrics pool every (query, table) decision over all test queries",
                "ranked metrics exclude queries with an empty gold set",
                "timing lives in timing.json and is not deterministic"};
  return j;
}

inline nlohmann::ordered_json timing_json(const TimingReport& t) {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["deterministic"] = false;
  j["train_seconds"] = t.train_seconds;
  j["total_seconds"] = t.total_seconds;
  j["peak_memory_mb"] = t.peak_memory_mb;
  j["query_ms_raw"] = t.query_ms_raw;
  j["query_ms_amortized"] = t.query_ms_amortized;
  return j;
}

// split -> graph -> train -> materialize -> index -> classifier -> evaluate on the test
// statements. Artifacts go to options.output_dir; an INCOMPLETE marker stays behind on failure.
inline MetricsReport run_benchmark(const DataLake& lake, const Hyperparams& hyper, const BenchmarkOptions& options) {
  namespace fs = std::filesystem;
  using Clock = std::chrono::steady_clock;
  hyper.validate();
  lake.validate();
  if (!options.ranked && !options.binary) throw ValidationError("benchmark needs at least one retrieval mode");
  if (options.output_dir.empty()) throw ValidationError("benchmark needs an output directory");
  const fs::path dir = options.output_dir;
  fs::create_directories(dir);
  const fs::path marker = dir / "INCOMPLETE";
  io::write_file(marker, "benchmark did not finish; artifacts in this directory are partial\n");
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  const auto t_start = Clock::now();

  MetricsReport report;
  Split split = lakescout::split(lake, SplitSpec{0.2, 0.2, 0.6, hyper.seed});
  if (options.train_fraction) split = subsample_train(split, lake.statements.size(), *options.train_fraction, hyper.seed);
  report.train_statements = split.statements.train.size();
  io::write_file(dir / "split.json", split_to_json(split).dump(2) + "\n");

  const auto featurizer_ptr = options.featurizer ? options.featurizer
                                                 : std::make_shared<const HashingFeaturizer>(hyper.d_c, hyper.seed);
  const TextFeaturizer& featurizer = *featurizer_ptr;
  const auto scorer_ptr =
      options.scorer ? options.scorer : std::make_shared<const ContentCosineScorer>(featurizer);
  const TableSimilarityScorer& scorer = *scorer_ptr;
  const GraphConfig gconf{hyper.k, {}};
  const HeteroGraph graph = build_graph(lake, split, scorer, gconf);
  save_graph(graph, dir / "graph.bin");
  log("graph: " + std::to_string(graph.num_nodes()) + " nodes");

  const auto t_train = Clock::now();
  TrainResult trained = train(lake, graph, split, featurizer, hyper, [&](const EpochStats& s) {
    log("epoch " + std::to_string(s.epoch) + " loss " + std::to_string(s.loss) + " val " +
        std::to_string(s.validation_score));
  });
  report.timing.train_seconds = seconds(t_train, Clock::now());
  report.best_epoch = trained.best.epoch;
  report.best_validation_score = trained.best.validation_score;
  for (const auto& w : trained.warnings) log("warning: " + w);
  save_checkpoint(trained.best, dir / "checkpoint.bin");

  const auto t_index = Clock::now();
  AggregationOptions agg;
  agg.neighbor_cap = neighbor_cap_for(graph);
  const EmbeddingTable emb =
      materialize_embeddings(trained.best.params, graph, encoder_input_for(lake, featurizer), agg);
  save_embeddings(emb, dir / "embeddings.bin");
  const AnnIndex index = AnnIndex::build(emb.table_ids, emb.table_block(),
                                         AnnConfig{hyper.n_trees, hyper.leaf_capacity, hyper.seed});
  index.save(dir / "index.bin");
  const double index_seconds = seconds(t_index, Clock::now());

  std::optional<RelevanceClassifier> classifier;
  if (options.binary) {
    classifier = train_relevance_classifier(
        emb, lake.nl_table_labels, split.statements.train, split.statements.val,
        ClassifierConfig{hyper.classifier_epochs, hyper.classifier_negative_ratio, hyper.classifier_learning_rate,
                         hyper.seed});
    report.classifier_validation_f1 = classifier->validation_f1;
    save_classifier(*classifier, dir / "classifier.bin");
  }

  const RetrievalEngine engine(lake, graph, trained.best.params, emb.beta, featurizer, scorer, gconf);
  const LakeIndex idx(lake);
  const GoldSets all_gold = lake.gold_by_statement();
  GoldSets gold, predicted;
  std::map<std::string, std::vector<std::string>> ranked;
  std::size_t max_k = 1;
  for (std::size_t k : options.ks) max_k = std::max(max_k, k);
  std::string results;
  double query_seconds = 0.0;
  for (const auto& sid : split.statements.test) {
    const auto tq = Clock::now();
    const Query q{lake.statements[*idx.statement(sid)]};
    const Vector h = engine.embed_query(q, sid);
    auto it = all_gold.find(sid);
    gold[sid] = it == all_gold.end() ? std::set<std::string>{} : it->second;
    if (options.ranked) {
      auto r = rank_tables(h, index, max_k, hyper.search_breadth_factor);
      for (const auto& t : r.tables) ranked[sid].push_back(t.id);
      results += result_record(sid, "ranked", r.tables).dump() + "\n";
    }
    if (options.binary) {
      auto b = binary_retrieve(h, index, *classifier, hyper.candidate_fraction, hyper.search_breadth_factor);
      auto& set = predicted[sid];
      for (const auto& t : b.tables) set.insert(t.id);
      results += result_record(sid, "binary", b.tables).dump() + "\n";
    }
    query_seconds += seconds(tq, Clock::now());
  }
  io::write_file(dir / "results.jsonl", results);
  report.test_queries = split.statements.test.size();
  if (options.binary) {
    report.binary = compute_binary_metrics(predicted, gold, Averaging::Micro);
    report.binary_macro = compute_binary_metrics(predicted, gold, Averaging::Macro);
    if (options.averaging == Averaging::Macro) std::swap(*report.binary, *report.binary_macro);
  }
  if (options.ranked) report.ranked = compute_ranked_metrics(ranked, gold, options.ks);

  const double nq = std::max<double>(1.0, static_cast<double>(report.test_queries));
  report.timing.query_ms_raw = 1000.0 * query_seconds / nq;
  report.timing.query_ms_amortized = 1000.0 * (query_seconds + index_seconds) / nq;
  report.timing.total_seconds = seconds(t_start, Clock::now());
  report.timing.peak_memory_mb = peak_memory_mb();

  auto mj = metrics_json(report, hyper);
  if (options.averaging == Averaging::Macro) mj["averaging"] = "macro";
  io::write_file(dir / "metrics.json", mj.dump(2) + "\n");
  io::write_file(dir / "timing.json", timing_json(report.timing).dump(2) + "\n");
  fs::remove(marker);
  return report;
}

enum class SweepAxis { TrainFraction, K };

inline const char* to_string(SweepAxis a) { return a == SweepAxis::TrainFraction ? "train_fraction" : "k"; }

inline std::vector<double> default_sweep_values(SweepAxis a) {
  if (a == SweepAxis::TrainFraction) return {0.01, 0.05, 0.10, 0.20};
  return {1, 5, 10, 15, 20};
}

struct SweepRow {
  double value = 0.0;
  MetricsReport report;
};

// One benchmark per axis value under output_dir/<axis>=<value>, plus sweep.jsonl with one row each.
inline std::vector<SweepRow> run_sweep(const DataLake& lake, const Hyperparams& hyper, SweepAxis axis,
                                       const std::vector<double>& values, const BenchmarkOptions& options) {
  namespace fs = std::filesystem;
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  fs::create_directories(options.output_dir);
  std::vector<SweepRow> rows;
  std::string lines;
  for (double v : values) {
    Hyperparams h = hyper;
    BenchmarkOptions o = options;
    std::ostringstream name;
    name << to_string(axis) << "=" << v;
    if (axis == SweepAxis::K) {
      if (!(v >= 1.0) || v != std::floor(v)) throw ValidationError("K sweep values must be positive integers");
      h.k = static_cast<std::size_t>(v);
    } else {
      o.train_fraction = v;
    }
    o.output_dir = options.output_dir / name.str();
    if (options.log) options.log("sweep " + name.str());
    SweepRow row{v, run_benchmark(lake, h, o)};
    nlohmann::ordered_json j;
    j["axis"] = to_string(axis);
    j["value"] = v;
    j["metrics"] = metrics_json(row.report, h);
    lines += j.dump() + "\n";
    rows.push_back(std::move(row));
  }
  io::write_file(options.output_dir / "sweep.jsonl", lines);
  return rows;
}

}  // namespace lakescout
