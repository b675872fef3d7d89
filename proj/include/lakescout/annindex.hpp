#pragma once

#include "autodiff.hpp"
#include "binary_io.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace lakescout {

inline constexpr std::size_t kExactModeLimit = 1000;

struct AnnConfig {
  std::size_t n_trees = 10;
  std::size_t leaf_capacity = 16;
  std::uint64_t seed = 0;
};

struct ScoredId {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredId&) const = default;
};

// Forest of random-hyperplane trees over unit vectors with an exact fallback for small
// corpora. Immutable after build.
class AnnIndex {
 public:
  struct Node {
    int left = -1, right = -1;  // children; both -1 for a leaf
    int plane = -1;             // row of planes_ for internal nodes
    int leaf_start = 0, leaf_len = 0;
  };

  AnnIndex() = default;

  static AnnIndex build(std::vector<std::string> ids, const Matrix& vectors, const AnnConfig& config = {}) {
    if (ids.empty() || vectors.rows() == 0) throw ValidationError("cannot index an empty corpus");
    if (static_cast<Eigen::Index>(ids.size()) != vectors.rows()) throw ValidationError("id count differs from vector count");
    if (config.n_trees == 0 || config.leaf_capacity == 0) throw ValidationError("n_trees and leaf_capacity must be positive");
    AnnIndex x;
    x.ids_ = std::move(ids);
    x.config_ = config;
    x.vectors_ = Matrix(vectors.rows(), vectors.cols());
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      RowVector v = vectors.row(i);
      if (!v.allFinite()) throw ValidationError("non-finite vector for '" + x.ids_[static_cast<std::size_t>(i)] + "'");
      const double n = v.norm();
      if (n > 0.0) v /= n;
      x.vectors_.row(i) = v.cast<float>().cast<double>();
    }
    x.exact_ = x.count() <= kExactModeLimit;
    if (!x.exact_) {
      Rng rng(config.seed);
      std::vector<double> offsets;
      std::vector<RowVector> planes;
      for (std::size_t t = 0; t < config.n_trees; ++t) {
        std::vector<int> all(x.count());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        x.roots_.push_back(x.grow(all, rng, planes, offsets));
      }
      x.planes_ = Matrix(static_cast<Eigen::Index>(planes.size()), x.vectors_.cols());
      for (std::size_t i = 0; i < planes.size(); ++i) x.planes_.row(static_cast<Eigen::Index>(i)) = planes[i];
      x.offsets_ = Eigen::Map<Vector>(offsets.data(), static_cast<Eigen::Index>(offsets.size()));
    }
    return x;
  }

  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  std::size_t count() const { return ids_.size(); }
  bool exact_mode() const { return exact_; }
  const AnnConfig& config() const { return config_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& roots() const { return roots_; }

  // Top-k by cosine among candidates gathered from the trees (best-first over hyperplane
  // margins, until search_breadth candidates), or among all vectors in exact mode.
  // search_breadth 0 means 10 * k.
  std::vector<ScoredId> query(const Vector& q, std::size_t k, std::size_t search_breadth = 0) const {
    if (k == 0) throw ValidationError("k must be at least 1");
    if (static_cast<std::size_t>(q.size()) != dim()) {
      throw ValidationError("query dimension " + std::to_string(q.size()) + " does not match index dimension " +
                            std::to_string(dim()));
    }
    if (!q.allFinite()) throw ValidationError("query vector is not finite");
    if (search_breadth == 0) search_breadth = 10 * k;
    const double qn = q.norm();
    const Vector unit = qn > 0.0 ? Vector(q / qn) : Vector(q);
    std::vector<int> cand;
    if (exact_ || qn == 0.0) {
      cand.resize(count());
      for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = static_cast<int>(i);
    } else {
      cand = gather(unit, std::max(search_breadth, k));
    }
    std::vector<ScoredId> scored;
    scored.reserve(cand.size());
    for (int i : cand) {
      const double s = qn > 0.0 ? vectors_.row(i).dot(unit) : 0.0;
      scored.push_back({ids_[static_cast<std::size_t>(i)], s});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
  }

  // Exact cosine top-k, the reference the approximate mode is measured against.
  std::vector<ScoredId> brute_force(const Vector& q, std::size_t k) const {
    AnnIndex copy = *this;
    copy.exact_ = true;
    return copy.query(q, k, 0);
  }

  std::string serialize() const {
    nlohmann::ordered_json h;
    h["kind"] = "ann-index";
    h["version"] = kVersion;
    h["dim"] = dim();
    h["count"] = count();
    h["n_trees"] = config_.n_trees;
    h["leaf_capacity"] = config_.leaf_capacity;
    h["seed"] = config_.seed;
    h["exact_mode"] = exact_;
    h["ids"] = ids_;
    std::vector<std::int32_t> node_data, leaf_data(leaf_items_.begin(), leaf_items_.end()),
        root_data(roots_.begin(), roots_.end());
    for (const auto& n : nodes_) {
      for (int v : {n.left, n.right, n.plane, n.leaf_start, n.leaf_len}) node_data.push_back(v);
    }
    return binio::encode(h, {binio::float_block("vectors", vectors_), binio::float_block("planes", planes_),
                             binio::float_block("offsets", offsets_), binio::int_block("nodes", node_data),
                             binio::int_block("leaf_items", leaf_data), binio::int_block("roots", root_data)});
  }

  static AnnIndex deserialize(const std::string& bytes, const std::string& source = "index") {
    auto d = binio::decode(bytes, "ann-index", kVersion, source);
    AnnIndex x;
    try {
      x.ids_ = d.manifest.at("ids").get<std::vector<std::string>>();
      x.config_.n_trees = d.manifest.at("n_trees").get<std::size_t>();
      x.config_.leaf_capacity = d.manifest.at("leaf_capacity").get<std::size_t>();
      x.config_.seed = d.manifest.at("seed").get<std::uint64_t>();
      x.exact_ = d.manifest.at("exact_mode").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(source + ": bad index manifest: " + e.what());
    }
    x.vectors_ = binio::to_matrix(d.block("vectors"));
    x.planes_ = binio::to_matrix(d.block("planes"));
    x.offsets_ = binio::to_matrix(d.block("offsets"));
    const auto& nd = d.block("nodes").i32;
    const auto& leaves = d.block("leaf_items").i32;
    const auto& roots = d.block("roots").i32;
    if (nd.size() % 5 != 0 || static_cast<std::size_t>(x.vectors_.rows()) != x.ids_.size() ||
        d.manifest.value("count", std::size_t{0}) != x.ids_.size() ||
        d.manifest.value("dim", std::size_t{0}) != static_cast<std::size_t>(x.vectors_.cols())) {
      throw ValidationError(source + ": index header does not match its data");
    }
    for (std::size_t i = 0; i < nd.size(); i += 5) {
      x.nodes_.push_back({nd[i], nd[i + 1], nd[i + 2], nd[i + 3], nd[i + 4]});
    }
    x.leaf_items_.assign(leaves.begin(), leaves.end());
    x.roots_.assign(roots.begin(), roots.end());
    x.check_structure(source);
    return x;
  }

  void save(const std::filesystem::path& p) const { io::write_file(p, serialize()); }

  static AnnIndex load(const std::filesystem::path& p) { return deserialize(io::read_file(p), p.string()); }

  // Hash of the full serialized state.
  std::uint64_t content_hash() const { return fnv1a64(serialize()); }

  static constexpr int kVersion = 1;

 private:
  int grow(const std::vector<int>& items, Rng& rng, std::vector<RowVector>& planes, std::vector<double>& offsets) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    if (items.size() <= config_.leaf_capacity) {
      nodes_[static_cast<std::size_t>(id)].leaf_start = static_cast<int>(leaf_items_.size());
      nodes_[static_cast<std::size_t>(id)].leaf_len = static_cast<int>(items.size());
      leaf_items_.insert(leaf_items_.end(), items.begin(), items.end());
      return id;
    }
    std::vector<int> left, right;
    RowVector normal;
    double offset = 0.0;
    for (int attempt = 0; attempt < 8 && (left.empty() || right.empty()); ++attempt) {
      left.clear();
      right.clear();
      const auto pick = rng.sample_without_replacement(items.size(), 2);
      const RowVector a = vectors_.row(items[pick[0]]), b = vectors_.row(items[pick[1]]);
      normal = (a - b).cast<float>().cast<double>();
      offset = static_cast<double>(static_cast<float>(normal.dot(a + b) / 2.0));
      for (int i : items) (margin(normal, offset, vectors_.row(i)) > 0.0 ? right : left).push_back(i);
    }
    if (left.empty() || right.empty()) {
      // Coincident points: split in half by a random order.
      std::vector<int> shuffled = items;
      rng.shuffle(shuffled);
      left.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(shuffled.size() / 2));
      right.assign(shuffled.begin() + static_cast<long>(shuffled.size() / 2), shuffled.end());
      std::sort(left.begin(), left.end());
      std::sort(right.begin(), right.end());
      normal = RowVector::Zero(vectors_.cols());
      offset = 0.0;
    }
    const int plane = static_cast<int>(planes.size());
    planes.push_back(normal);
    offsets.push_back(offset);
    const int l = grow(left, rng, planes, offsets);
    const int r = grow(right, rng, planes, offsets);
    auto& n = nodes_[static_cast<std::size_t>(id)];
    n.left = l;
    n.right = r;
    n.plane = plane;
    return id;
  }

  static double margin(const RowVector& normal, double offset, const RowVector& v) { return normal.dot(v) - offset; }

  std::vector<int> gather(const Vector& q, std::size_t breadth) const {
    // Max-heap on the smallest margin seen along the path (Annoy's priority rule).
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry> heap;
    for (int r : roots_) heap.push({std::numeric_limits<double>::infinity(), r});
    std::vector<char> seen(count(), 0);
    std::vector<int> out;
    while (!heap.empty() && out.size() < breadth) {
      const auto [pri, id] = heap.top();
      heap.pop();
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.left < 0) {
        for (int k = n.leaf_start; k < n.leaf_start + n.leaf_len; ++k) {
          const int item = leaf_items_[static_cast<std::size_t>(k)];
          if (!seen[static_cast<std::size_t>(item)]) {
            seen[static_cast<std::size_t>(item)] = 1;
            out.push_back(item);
          }
        }
        continue;
      }
      const double m = planes_.row(n.plane).dot(q.transpose()) - offsets_(n.plane);
      heap.push({std::min(pri, m), n.right});
      heap.push({std::min(pri, -m), n.left});
    }
    return out;
  }

  void check_structure(const std::string& source) const {
    auto bad = [&] { return ValidationError(source + ": corrupt index structure"); };
    const int nn = static_cast<int>(nodes_.size());
    for (const auto& n : nodes_) {
      if (n.left < 0) {
        if (n.leaf_start < 0 || n.leaf_len < 0 || n.leaf_start + n.leaf_len > static_cast<int>(leaf_items_.size())) {
          throw bad();
        }
      } else if (n.left >= nn || n.right < 0 || n.right >= nn || n.plane < 0 || n.plane >= planes_.rows()) {
        throw bad();
      }
    }
    for (int item : leaf_items_) {
      if (item < 0 || item >= static_cast<int>(count())) throw bad();
    }
    for (int r : roots_) {
      if (r < 0 || r >= nn) throw bad();
    }
    if (!exact_ && roots_.size() != config_.n_trees) throw bad();
  }

  std::vector<std::string> ids_;
  AnnConfig config_;
  Matrix vectors_;
  bool exact_ = true;
  std::vector<Node> nodes_;
  std::vector<int> leaf_items_;
  std::vector<int> roots_;
  Matrix planes_;
  Vector offsets_;
};

}  // namespace lakescout
