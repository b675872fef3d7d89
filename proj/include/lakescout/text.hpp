#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lakescout {

// Lowercase, split on anything that is not an ASCII letter or digit. No stemming.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct CorpusStats {
  std::size_t num_docs = 0;
  std::unordered_map<std::string, std::size_t> doc_freq;
  double avg_doc_len = 0.0;

  std::size_t df(const std::string& term) const {
    auto it = doc_freq.find(term);
    return it == doc_freq.end() ? 0 : it->second;
  }
};

inline double bm25_idf(std::size_t num_docs, std::size_t df) {
  const double n = static_cast<double>(num_docs);
  const double d = static_cast<double>(df);
  return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

// Okapi BM25 of a document for a query; repeated query terms count once.
inline double bm25_score(const std::vector<std::string>& query_tokens,
                         const std::vector<std::string>& doc_tokens, const CorpusStats& stats,
                         Bm25Params params = {}) {
  if (doc_tokens.empty() || stats.avg_doc_len <= 0.0) return 0.0;
  std::map<std::string, int> tf;
  for (const auto& t : doc_tokens) ++tf[t];
  std::vector<std::string> terms = query_tokens;
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  const double len_norm = 1.0 - params.b + params.b * static_cast<double>(doc_tokens.size()) / stats.avg_doc_len;
  double score = 0.0;
  for (const auto& term : terms) {
    auto it = tf.find(term);
    if (it == tf.end()) continue;
    const double f = it->second;
    score += bm25_idf(stats.num_docs, stats.df(term)) * f * (params.k1 + 1.0) / (f + params.k1 * len_norm);
  }
  return score;
}

// Inverted index over a fixed document collection; scores every document for a query
// by walking postings only.
class Bm25Index {
 public:
  Bm25Index() = default;

  explicit Bm25Index(std::vector<std::vector<std::string>> docs, Bm25Params params = {})
      : docs_(std::move(docs)), params_(params) {
    stats_.num_docs = docs_.size();
    double total = 0.0;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      total += static_cast<double>(docs_[d].size());
      std::map<std::string, int> tf;
      for (const auto& t : docs_[d]) ++tf[t];
      for (const auto& [term, f] : tf) {
        postings_[term].push_back({d, static_cast<double>(f)});
        ++stats_.doc_freq[term];
      }
    }
    stats_.avg_doc_len = docs_.empty() ? 0.0 : total / static_cast<double>(docs_.size());
  }

  const CorpusStats& stats() const { return stats_; }
  std::size_t size() const { return docs_.size(); }
  const std::vector<std::string>& doc(std::size_t i) const { return docs_[i]; }

  std::vector<double> score_all(const std::vector<std::string>& query) const {
    std::vector<double> scores(docs_.size(), 0.0);
    if (stats_.avg_doc_len <= 0.0) return scores;
    std::vector<std::string> terms = query;
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (const auto& term : terms) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double idf = bm25_idf(stats_.num_docs, it->second.size());
      for (const auto& [d, f] : it->second) {
        const double len_norm =
            1.0 - params_.b + params_.b * static_cast<double>(docs_[d].size()) / stats_.avg_doc_len;
        scores[d] += idf * f * (params_.k1 + 1.0) / (f + params_.k1 * len_norm);
      }
    }
    return scores;
  }

 private:
  struct Posting {
    std::size_t doc;
    double tf;
  };
  std::vector<std::vector<std::string>> docs_;
  Bm25Params params_;
  CorpusStats stats_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace lakescout
