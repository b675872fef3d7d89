#include "lakescout.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;
using namespace lakescout;

namespace {

// Files kept in a work directory between subcommands.
struct WorkDir {
  fs::path root;

  fs::path settings() const { return root / "work.json"; }
  fs::path split() const { return root / "split.json"; }
  fs::path graph() const { return root / "graph.bin"; }
  fs::path checkpoint() const { return root / "checkpoint.bin"; }
  fs::path embeddings() const { return root / "embeddings.bin"; }
  fs::path index() const { return root / "index.bin"; }
  fs::path classifier() const { return root / "classifier.bin"; }
};

struct Settings {
  Hyperparams hyper;
  std::string features;      // external embedding JSONL, empty for hashing
  std::string table_scores;  // precomputed table similarity TSV, empty for content cosine
};

struct CommonFlags {
  std::string lake;
  std::string work = "work";
  std::string config;
  std::string features;
  std::string table_scores;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_lake = true) {
  auto* lake = cmd->add_option("--lake", f.lake, "data lake directory (tables/, statements.jsonl, labels.tsv)");
  if (needs_lake) lake->required();
  cmd->add_option("--work", f.work, "work directory for artifacts")->capture_default_str();
  cmd->add_option("--config", f.config, "JSON hyperparameter file");
  cmd->add_option("--features", f.features, "external content embeddings (JSONL {key, vector})");
  cmd->add_option("--table-scores", f.table_scores, "precomputed table similarity scores (TSV a, b, score)");
}

Settings resolve_settings(const CommonFlags& f, const WorkDir& w) {
  Settings s;
  if (fs::exists(w.settings())) {
    auto j = nlohmann::json::parse(io::read_file(w.settings()));
    s.hyper = hyperparams_from_json(j.at("hyperparams"));
    s.features = j.value("features", "");
    s.table_scores = j.value("table_scores", "");
  }
  if (!f.config.empty()) s.hyper = load_hyperparams(f.config);
  if (!f.features.empty()) s.features = f.features;
  if (!f.table_scores.empty()) s.table_scores = f.table_scores;
  s.hyper.validate();
  return s;
}

void save_settings(const Settings& s, const WorkDir& w) {
  nlohmann::ordered_json j;
  j["hyperparams"] = s.hyper;
  j["features"] = s.features;
  j["table_scores"] = s.table_scores;
  io::write_file(w.settings(), j.dump(2) + "\n");
}

std::shared_ptr<const TextFeaturizer> make_featurizer(const Settings& s) {
  auto hashing = std::make_shared<const HashingFeaturizer>(s.hyper.d_c, s.hyper.seed);
  if (s.features.empty()) return hashing;
  auto ext = std::make_shared<const ExternalFeaturizer>(ExternalFeaturizer::load(s.features, hashing));
  if (ext->dim() != s.hyper.d_c) {
    throw ValidationError("external embeddings have dimension " + std::to_string(ext->dim()) + " but d_c = " +
                          std::to_string(s.hyper.d_c));
  }
  return ext;
}

std::shared_ptr<const TableSimilarityScorer> make_scorer(const Settings& s, const TextFeaturizer& f) {
  if (!s.table_scores.empty()) return std::make_shared<const FileTableScorer>(s.table_scores);
  return std::make_shared<const ContentCosineScorer>(f);
}

DataLake load_lake(const std::string& dir) { return load_datalake(LakeLayout{dir}); }

Split load_split(const WorkDir& w) {
  try {
    return split_from_json(nlohmann::json::parse(io::read_file(w.split())));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(w.split().string() + ": " + e.what());
  }
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      ks.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ValidationError("bad k value '" + item + "'");
    }
  }
  if (ks.empty()) throw ValidationError("no k values given");
  return ks;
}

// Loaded frozen state for query-time commands.
struct Loaded {
  DataLake lake;
  Settings settings;
  std::shared_ptr<const TextFeaturizer> featurizer;
  std::shared_ptr<const TableSimilarityScorer> scorer;
  HeteroGraph graph;
  Checkpoint checkpoint;
  EmbeddingTable embeddings;
  AnnIndex index;

  RetrievalEngine engine() const {
    return RetrievalEngine(lake, graph, checkpoint.params, embeddings.beta, *featurizer, *scorer,
                           GraphConfig{settings.hyper.k, {}});
  }
};

Loaded load_all(const CommonFlags& f) {
  const WorkDir w{f.work};
  Loaded l{load_lake(f.lake), resolve_settings(f, w), {}, {}, load_graph(w.graph()), load_checkpoint(w.checkpoint()),
           load_embeddings(w.embeddings()), AnnIndex::load(w.index())};
  l.featurizer = make_featurizer(l.settings);
  l.scorer = make_scorer(l.settings, *l.featurizer);
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table discovery over data lakes with heterogeneous graph embeddings"};
  app.require_subcommand(1);

  // generate
  SyntheticSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic data lake with clustered ground truth");
  gen->add_option("--out", gen_out, "output lake directory")->required();
  gen->add_option("--clusters", spec.n_clusters)->capture_default_str();
  gen->add_option("--tables-per-cluster", spec.tables_per_cluster)->capture_default_str();
  gen->add_option("--statements-per-cluster", spec.statements_per_cluster)->capture_default_str();
  gen->add_option("--vocab", spec.vocab_size)->capture_default_str();
  gen->add_option("--noise", spec.noise_rate)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();

  CommonFlags common;

  auto* bg = app.add_subcommand("build-graph", "split the lake and build the heterogeneous graph");
  add_common(bg, common);

  auto* tr = app.add_subcommand("train", "train the model and materialize embeddings");
  add_common(tr, common);
  bool quiet = false;
  tr->add_flag("--quiet", quiet, "suppress per-epoch progress");

  auto* ix = app.add_subcommand("index", "build the nearest-neighbor index over table embeddings");
  add_common(ix, common, false);

  auto* tc = app.add_subcommand("train-classifier", "train the relevance classifier for binary retrieval");
  add_common(tc, common);

  std::string mode = "ranked", query_file;
  std::size_t k = 10;
  bool no_header = false;
  auto* qy = app.add_subcommand("query", "retrieve tables for one statement or table");
  add_common(qy, common);
  qy->add_option("--mode", mode)->check(CLI::IsMember({"ranked", "binary"}))->capture_default_str();
  qy->add_option("--k", k, "number of ranked results")->capture_default_str();
  qy->add_option("--query-file", query_file, "statement JSON {id, text} or table CSV")->required();
  qy->add_flag("--no-header", no_header, "query CSV has no header row");

  std::string ks_text = "1,5,10", averaging = "micro", eval_out;
  auto* ev = app.add_subcommand("evaluate", "evaluate held-out statements against gold labels");
  add_common(ev, common);
  ev->add_option("--ks", ks_text, "comma-separated k values for ranked metrics")->capture_default_str();
  ev->add_option("--averaging", averaging)->check(CLI::IsMember({"micro", "macro"}))->capture_default_str();
  ev->add_option("--out", eval_out, "write metrics JSON here instead of stdout");

  std::string axis = "train_fraction", bench_out;
  std::vector<double> values;
  auto* sw = app.add_subcommand("sweep", "run the benchmark across train fractions or K values");
  add_common(sw, common);
  sw->add_option("--axis", axis)->check(CLI::IsMember({"train_fraction", "k"}))->capture_default_str();
  sw->add_option("--values", values, "axis values (default: standard grid)");
  sw->add_option("--out", bench_out, "output directory")->required();

  auto* bm = app.add_subcommand("benchmark", "run split, graph, training, indexing and evaluation end to end");
  add_common(bm, common);
  bm->add_option("--out", bench_out, "output directory")->required();
  bm->add_option("--ks", ks_text, "comma-separated k values for ranked metrics")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const WorkDir w{common.work};
    auto log = [&](const std::string& m) {
      if (!quiet) std::cerr << m << "\n";
    };

    if (*gen) {
      save_datalake(generate_synthetic_lake(spec), LakeLayout{gen_out});
    } else if (*bg) {
      const DataLake lake = load_lake(common.lake);
      Settings s = resolve_settings(common, w);
      auto f = make_featurizer(s);
      auto scorer = make_scorer(s, *f);
      const Split sp = split(lake, SplitSpec{0.2, 0.2, 0.6, s.hyper.seed});
      fs::create_directories(w.root);
      save_settings(s, w);
      io::write_file(w.split(), split_to_json(sp).dump(2) + "\n");
      const HeteroGraph g = build_graph(lake, sp, *scorer, GraphConfig{s.hyper.k, {}});
      save_graph(g, w.graph());
      std::cerr << "graph: " << g.num_statements() << " statements, " << g.num_tables() << " tables, "
                << g.edges_st().size() << " nl-table, " << g.edges_ss().size() << " nl-nl, " << g.edges_tt().size()
                << " table-table edges\n";
    } else if (*tr) {
      const DataLake lake = load_lake(common.lake);
      const Settings s = resolve_settings(common, w);
      auto f = make_featurizer(s);
      const HeteroGraph g = load_graph(w.graph());
      const Split sp = load_split(w);
      TrainResult result = train(lake, g, sp, *f, s.hyper, [&](const EpochStats& e) {
        log("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss) + " validation " +
            std::to_string(e.validation_score));
      });
      for (const auto& warn : result.warnings) std::cerr << "warning: " << warn << "\n";
      save_checkpoint(result.best, w.checkpoint());
      AggregationOptions opt;
      opt.neighbor_cap = neighbor_cap_for(g);
      save_embeddings(materialize_embeddings(result.best.params, g, encoder_input_for(lake, *f), opt), w.embeddings());
      std::cerr << "best epoch " << result.best.epoch << " validation " << result.best.validation_score << "\n";
    } else if (*ix) {
      const Settings s = resolve_settings(common, w);
      const EmbeddingTable emb = load_embeddings(w.embeddings());
      const AnnIndex index =
          AnnIndex::build(emb.table_ids, emb.table_block(), AnnConfig{s.hyper.n_trees, s.hyper.leaf_capacity, s.hyper.seed});
      index.save(w.index());
      std::cerr << "indexed " << index.count() << " tables (" << (index.exact_mode() ? "exact" : "approximate")
                << " search)\n";
    } else if (*tc) {
      const DataLake lake = load_lake(common.lake);
      const Settings s = resolve_settings(common, w);
      const Split sp = load_split(w);
      const EmbeddingTable emb = load_embeddings(w.embeddings());
      const auto c = train_relevance_classifier(
          emb, lake.nl_table_labels, sp.statements.train, sp.statements.val,
          ClassifierConfig{s.hyper.classifier_epochs, s.hyper.classifier_negative_ratio,
                           s.hyper.classifier_learning_rate, s.hyper.seed});
      save_classifier(c, w.classifier());
      std::cerr << "classifier train F1 " << c.train_f1 << " validation F1 " << c.validation_f1 << "\n";
    } else if (*qy) {
      const Loaded l = load_all(common);
      const RetrievalEngine engine = l.engine();
      const Query q = read_query_file(query_file, !no_header);
      const Vector h = engine.embed_query(q);
      if (mode == "ranked") {
        std::cout << result_record(q.id(), "ranked", rank_tables(h, l.index, k, l.settings.hyper.search_breadth_factor).tables)
                         .dump()
                  << "\n";
      } else {
        const auto c = load_classifier(w.classifier());
        const auto r = binary_retrieve(h, l.index, c, l.settings.hyper.candidate_fraction,
                                       l.settings.hyper.search_breadth_factor);
        std::cout << result_record(q.id(), "binary", r.tables).dump() << "\n";
      }
    } else if (*ev) {
      const Loaded l = load_all(common);
      const RetrievalEngine engine = l.engine();
      const auto c = load_classifier(w.classifier());
      const Split sp = load_split(w);
      const auto ks = parse_ks(ks_text);
      const LakeIndex idx(l.lake);
      const GoldSets all_gold = l.lake.gold_by_statement();
      GoldSets gold, predicted;
      std::map<std::string, std::vector<std::string>> ranked;
      const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
      for (const auto& sid : sp.statements.test) {
        const Query q{l.lake.statements[*idx.statement(sid)]};
        const Vector h = engine.embed_query(q, sid);
        auto it = all_gold.find(sid);
        gold[sid] = it == all_gold.end() ? std::set<std::string>{} : it->second;
        for (const auto& t : rank_tables(h, l.index, max_k, l.settings.hyper.search_breadth_factor).tables) {
          ranked[sid].push_back(t.id);
        }
        auto& set = predicted[sid];
        for (const auto& t : binary_retrieve(h, l.index, c, l.settings.hyper.candidate_fraction,
                                             l.settings.hyper.search_breadth_factor)
                                 .tables) {
          set.insert(t.id);
        }
      }
      MetricsReport report;
      report.binary = compute_binary_metrics(predicted, gold, Averaging::Micro);
      report.binary_macro = compute_binary_metrics(predicted, gold, Averaging::Macro);
      if (averaging == "macro") std::swap(*report.binary, *report.binary_macro);
      report.ranked = compute_ranked_metrics(ranked, gold, ks);
      report.best_epoch = l.checkpoint.epoch;
      report.best_validation_score = l.checkpoint.validation_score;
      report.classifier_validation_f1 = c.validation_f1;
      report.train_statements = sp.statements.train.size();
      report.test_queries = sp.statements.test.size();
      auto j = metrics_json(report, l.settings.hyper);
      j["averaging"] = averaging;
      if (eval_out.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        io::write_file(eval_out, j.dump(2) + "\n");
      }
    } else if (*sw || *bm) {
      const DataLake lake = load_lake(common.lake);
      const Settings s = resolve_settings(common, WorkDir{bench_out});
      BenchmarkOptions o;
      o.output_dir = bench_out;
      o.ks = parse_ks(ks_text);
      o.featurizer = make_featurizer(s);
      o.scorer = make_scorer(s, *o.featurizer);
      o.log = [](const std::string& m) { std::cerr << m << "\n"; };
      if (*bm) {
        const auto r = run_benchmark(lake, s.hyper, o);
        std::cout << metrics_json(r, s.hyper).dump(2) << "\n";
      } else {
        const SweepAxis a = axis == "k" ? SweepAxis::K : SweepAxis::TrainFraction;
        const auto rows = run_sweep(lake, s.hyper, a, values.empty() ? default_sweep_values(a) : values, o);
        for (const auto& row : rows) {
          std::cout << to_string(a) << "=" << row.value;
          if (row.report.binary) std::cout << " f1=" << row.report.binary->f1;
          for (const auto& m : row.report.ranked) std::cout << " R@" << m.k << "=" << m.recall;
          std::cout << "\n";
        }
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
