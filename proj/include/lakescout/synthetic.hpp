#pragma once

#include "corpus.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace lakescout {

struct SyntheticSpec {
  std::size_t n_clusters = 5;
  std::size_t tables_per_cluster = 10;
  std::size_t statements_per_cluster = 40;
  std::size_t vocab_size = 100;
  double noise_rate = 0.1;
  std::uint64_t seed = 0;
  std::size_t columns_per_table = 4;
  std::size_t rows_per_table = 20;
  std::size_t statement_length = 8;
  std::size_t core_tokens = 3;

  void validate() const {
    if (n_clusters == 0 || tables_per_cluster == 0 || statements_per_cluster == 0 || vocab_size == 0 ||
        columns_per_table == 0 || rows_per_table == 0 || statement_length == 0 || core_tokens == 0) {
      throw ValidationError("synthetic spec counts must be at least 1");
    }
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ValidationError("noise_rate must lie in [0, 1)");
    if (vocab_size / n_clusters < core_tokens + 1) {
      throw ValidationError("vocab_size " + std::to_string(vocab_size) + " is too small for " +
                            std::to_string(n_clusters) + " disjoint cluster vocabularies");
    }
  }
};

// Cluster c owns tokens [c*V/n, (c+1)*V/n) of the global vocabulary; its first core_tokens
// appear in every table caption of the cluster and open every statement. Tables draw
// headers and cells from the cluster vocabulary; statement tokens are replaced by a uniform
// global token with probability noise_rate. Gold: each statement with every table of its cluster.
inline DataLake generate_synthetic_lake(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t per = spec.vocab_size / spec.n_clusters;
  auto word = [](std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%04zu", i);
    return std::string(buf);
  };
  auto cluster_token = [&](std::size_t c) { return word(c * per + rng.below(per)); };
  auto noisy = [&](std::string tok) {
    return spec.noise_rate > 0.0 && rng.bernoulli(spec.noise_rate) ? word(rng.below(per * spec.n_clusters)) : tok;
  };
  auto pad = [](char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
    return std::string(buf);
  };

  DataLake lake;
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (std::size_t j = 0; j < spec.tables_per_cluster; ++j) {
      Table t;
      t.id = pad('t', c * spec.tables_per_cluster + j);
      std::string caption;
      for (std::size_t k = 0; k < spec.core_tokens; ++k) caption += (k ? " " : "") + word(c * per + k);
      caption += " " + cluster_token(c);
      t.caption = caption;
      for (std::size_t col = 0; col < spec.columns_per_table; ++col) {
        Column column;
        column.header = cluster_token(c);
        for (std::size_t r = 0; r < spec.rows_per_table; ++r) column.values.push_back(cluster_token(c));
        t.columns.push_back(std::move(column));
      }
      lake.tables.push_back(std::move(t));
    }
  }
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (std::size_t j = 0; j < spec.statements_per_cluster; ++j) {
      NLStatement s;
      s.id = pad('s', c * spec.statements_per_cluster + j);
      std::string text = noisy(word(c * per + rng.below(spec.core_tokens)));
      for (std::size_t k = 1; k < spec.statement_length; ++k) text += " " + noisy(cluster_token(c));
      s.text = text;
      for (std::size_t t = 0; t < spec.tables_per_cluster; ++t) {
        lake.nl_table_labels.emplace_back(s.id, pad('t', c * spec.tables_per_cluster + t));
      }
      lake.statements.push_back(std::move(s));
    }
  }
  std::sort(lake.nl_table_labels.begin(), lake.nl_table_labels.end());
  lake.validate();
  return lake;
}

}  // namespace lakescout
