#pragma once

#include "lakescout.hpp"

#include <string>
#include <vector>

namespace fixtures {

// Six statements, six tables; unified ids s1..s6 -> 0..5, t1..t6 -> 6..11.
inline lakescout::HeteroGraph toy_graph() {
  std::vector<std::string> s, t;
  for (int i = 1; i <= 6; ++i) {
    s.push_back("s" + std::to_string(i));
    t.push_back("t" + std::to_string(i));
  }
  return lakescout::HeteroGraph(s, t, {{0, 1, 1.0}, {0, 4, 1.0}, {3, 4, 1.0}}, {{0, 1, 1.0}}, {});
}

inline lakescout::HeteroGraph random_graph(lakescout::Rng& rng) {
  const std::size_t S = 1 + rng.below(25), T = 1 + rng.below(25);
  std::vector<std::string> sids, tids;
  for (std::size_t i = 0; i < S; ++i) sids.push_back("s" + std::to_string(i));
  for (std::size_t i = 0; i < T; ++i) tids.push_back("t" + std::to_string(i));
  const double p = rng.uniform(0.02, 0.3);
  std::vector<lakescout::Edge> st, ss, tt;
  for (int u = 0; u < static_cast<int>(S); ++u) {
    for (int v = 0; v < static_cast<int>(T); ++v) {
      if (rng.bernoulli(p)) st.push_back({u, v, 1.0});
    }
  }
  for (int u = 0; u < static_cast<int>(S); ++u) {
    for (int v = u + 1; v < static_cast<int>(S); ++v) {
      if (rng.bernoulli(p)) ss.push_back({u, v, rng.uniform(0.1, 1.0)});
    }
  }
  for (int u = 0; u < static_cast<int>(T); ++u) {
    for (int v = u + 1; v < static_cast<int>(T); ++v) {
      if (rng.bernoulli(p)) tt.push_back({u, v, rng.uniform(0.1, 1.0)});
    }
  }
  return lakescout::HeteroGraph(sids, tids, st, ss, tt);
}

}  // namespace fixtures
