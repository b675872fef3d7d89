#pragma once

#include "autodiff.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace lakescout {

// Maps the text of one content element to a raw feature vector of fixed dimension.
// `key` names the element: "<node_id>", "<node_id>#caption" or "<node_id>#col<j>".
class TextFeaturizer {
 public:
  virtual ~TextFeaturizer() = default;
  virtual std::size_t dim() const = 0;
  virtual Vector featurize(const std::string& key, const std::string& text) const = 0;
};

// Signed feature hashing of the token bag, L2-normalized. Empty text gives the zero vector.
class HashingFeaturizer final : public TextFeaturizer {
 public:
  explicit HashingFeaturizer(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ValidationError("featurizer dimension must be positive");
  }

  std::size_t dim() const override { return dim_; }

  Vector featurize(const std::string&, const std::string& text) const override {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_));
    const std::uint64_t basis = fnv1a64(std::to_string(seed_));
    for (const auto& tok : tokenize(text)) {
      const std::uint64_t h = fnv1a64(tok, basis);
      const auto slot = static_cast<Eigen::Index>(h % dim_);
      v(slot) += (h >> 63) ? -1.0 : 1.0;
    }
    const double n = v.norm();
    if (n > 0.0) v /= n;
    return v;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Precomputed vectors keyed by content-element key. Keys missing from the file go to
// `fallback` when one is given, otherwise they are an error.
class ExternalFeaturizer final : public TextFeaturizer {
 public:
  ExternalFeaturizer(std::unordered_map<std::string, Vector> table, std::size_t dim,
                     std::shared_ptr<const TextFeaturizer> fallback = nullptr)
      : table_(std::move(table)), dim_(dim), fallback_(std::move(fallback)) {
    for (const auto& [k, v] : table_) {
      if (static_cast<std::size_t>(v.size()) != dim_) {
        throw ValidationError("external embedding '" + k + "' has dimension " + std::to_string(v.size()) +
                              ", expected " + std::to_string(dim_));
      }
    }
    if (fallback_ && fallback_->dim() != dim_) throw ValidationError("fallback featurizer dimension mismatch");
  }

  // JSON-lines records {"key": str, "vector": [floats]}.
  static ExternalFeaturizer load(const std::filesystem::path& path,
                                 std::shared_ptr<const TextFeaturizer> fallback = nullptr) {
    std::unordered_map<std::string, Vector> table;
    std::size_t dim = 0;
    for (const auto& [n, line] : io::lines_of(io::read_file(path))) {
      try {
        auto j = nlohmann::json::parse(line);
        auto values = j.at("vector").get<std::vector<double>>();
        if (dim == 0) dim = values.size();
        Vector v = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
        table.emplace(j.at("key").get<std::string>(), std::move(v));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    if (dim == 0) {
      if (!fallback) throw ValidationError("external embedding file " + path.string() + " is empty");
      dim = fallback->dim();
    }
    return ExternalFeaturizer(std::move(table), dim, std::move(fallback));
  }

  std::size_t dim() const override { return dim_; }

  Vector featurize(const std::string& key, const std::string& text) const override {
    if (auto it = table_.find(key); it != table_.end()) return it->second;
    if (fallback_) return fallback_->featurize(key, text);
    throw ValidationError("no external embedding for key '" + key + "'");
  }

 private:
  std::unordered_map<std::string, Vector> table_;
  std::size_t dim_;
  std::shared_ptr<const TextFeaturizer> fallback_;
};

struct ContentSet {
  std::string node_id;
  std::vector<Vector> elements;

  std::size_t dim() const { return elements.empty() ? 0 : static_cast<std::size_t>(elements.front().size()); }
  std::size_t size() const { return elements.size(); }
};

inline constexpr std::size_t kMaxSampledCells = 20;

// Header followed by the first kMaxSampledCells cell values.
inline std::string column_text(const Column& c) {
  std::string out = c.header.value_or("");
  const std::size_t n = std::min(c.values.size(), kMaxSampledCells);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += c.values[i];
  }
  return out;
}

inline ContentSet extract_content_set(const NLStatement& s, const TextFeaturizer& f) {
  return ContentSet{s.id, {f.featurize(s.id, s.text)}};
}

// Caption first when present, then one element per column in schema order.
inline ContentSet extract_content_set(const Table& t, const TextFeaturizer& f) {
  ContentSet cs{t.id, {}};
  if (t.caption) cs.elements.push_back(f.featurize(t.id + "#caption", *t.caption));
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    cs.elements.push_back(f.featurize(t.id + "#col" + std::to_string(j), column_text(t.columns[j])));
  }
  return cs;
}

}  // namespace lakescout
