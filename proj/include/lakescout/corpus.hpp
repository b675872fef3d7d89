#pragma once

#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lakescout {

struct Column {
  std::optional<std::string> header;
  std::vector<std::string> values;

  bool operator==(const Column&) const = default;
};

struct Table {
  std::string id;
  std::optional<std::string> caption;
  std::vector<Column> columns;

  std::size_t num_rows() const { return columns.empty() ? 0 : columns.front().values.size(); }
  bool operator==(const Table&) const = default;
};

struct NLStatement {
  std::string id;
  std::string text;

  bool operator==(const NLStatement&) const = default;
};

// (query id, table id)
using LabelPair = std::pair<std::string, std::string>;

struct DataLake {
  std::vector<Table> tables;
  std::vector<NLStatement> statements;
  std::vector<LabelPair> nl_table_labels;                       // sorted, unique
  std::optional<std::vector<LabelPair>> table_table_labels;     // sorted, unique, symmetric

  bool operator==(const DataLake&) const = default;

  // Gold tables per statement id, for statements with at least one label.
  std::map<std::string, std::set<std::string>> gold_by_statement() const {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& [s, t] : nl_table_labels) out[s].insert(t);
    return out;
  }

  // Throws ValidationError listing every offending id.
  void validate() const {
    std::vector<std::string> problems;
    std::set<std::string> table_ids, statement_ids;
    for (const auto& t : tables) {
      if (t.id.empty()) problems.push_back("table with empty id");
      if (!table_ids.insert(t.id).second) problems.push_back("duplicate table id '" + t.id + "'");
      if (t.columns.empty()) problems.push_back("table '" + t.id + "' has no columns");
      for (const auto& c : t.columns) {
        if (c.values.size() != t.num_rows()) problems.push_back("table '" + t.id + "' has ragged columns");
      }
    }
    for (const auto& s : statements) {
      if (s.id.empty()) problems.push_back("statement with empty id");
      if (!statement_ids.insert(s.id).second) problems.push_back("duplicate statement id '" + s.id + "'");
      if (trim(s.text).empty()) problems.push_back("statement '" + s.id + "' has empty text");
    }
    std::set<std::string> dangling;
    std::set<LabelPair> seen;
    for (const auto& [s, t] : nl_table_labels) {
      if (!statement_ids.count(s)) dangling.insert(s);
      if (!table_ids.count(t)) dangling.insert(t);
      if (!seen.insert({s, t}).second) problems.push_back("duplicate label (" + s + ", " + t + ")");
    }
    if (table_table_labels) {
      std::set<LabelPair> tt(table_table_labels->begin(), table_table_labels->end());
      if (tt.size() != table_table_labels->size()) problems.push_back("duplicate table-table label");
      for (const auto& [a, b] : *table_table_labels) {
        if (!table_ids.count(a)) dangling.insert(a);
        if (!table_ids.count(b)) dangling.insert(b);
        if (a == b) problems.push_back("self table-table label on '" + a + "'");
        if (!tt.count({b, a})) problems.push_back("table-table labels not symmetric at (" + a + ", " + b + ")");
      }
    }
    if (!dangling.empty()) {
      std::string list;
      for (const auto& d : dangling) list += (list.empty() ? "" : ", ") + d;
      problems.push_back("labels reference unknown ids: " + list);
    }
    if (!problems.empty()) {
      std::string msg = "invalid data lake:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw ValidationError(msg);
    }
  }

};

// id -> position lookups for a lake; build once, share read-only.
class LakeIndex {
 public:
  explicit LakeIndex(const DataLake& lake) {
    for (std::size_t i = 0; i < lake.tables.size(); ++i) tables_[lake.tables[i].id] = i;
    for (std::size_t i = 0; i < lake.statements.size(); ++i) statements_[lake.statements[i].id] = i;
  }

  std::optional<std::size_t> table(const std::string& id) const {
    auto it = tables_.find(id);
    if (it == tables_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> statement(const std::string& id) const {
    auto it = statements_.find(id);
    if (it == statements_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> tables_;
  std::unordered_map<std::string, std::size_t> statements_;
};

namespace io {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + p.string());
  out << content;
  if (!out) throw RuntimeFailure("write failed for " + p.string());
}

inline std::vector<std::pair<std::size_t, std::string>> lines_of(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    out.emplace_back(n, line);
  }
  return out;
}

inline std::vector<LabelPair> read_pairs_tsv(const std::filesystem::path& p) {
  std::vector<LabelPair> out;
  for (const auto& [n, line] : lines_of(read_file(p))) {
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ValidationError(p.string() + ":" + std::to_string(n) + ": expected two tab-separated fields");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

inline std::string format_pairs_tsv(const std::vector<LabelPair>& pairs) {
  std::string out;
  for (const auto& [a, b] : pairs) out += a + "\t" + b + "\n";
  return out;
}

}  // namespace io

inline std::vector<LabelPair> symmetric_closure(std::vector<LabelPair> pairs) {
  const std::size_t n = pairs.size();
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(pairs[i].second, pairs[i].first);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

// Parses one table from CSV text. `has_header` says whether the first record names columns;
// empty header cells become missing headers.
inline Table parse_table_csv(const std::string& id, const std::string& text, bool has_header,
                             const std::string& source) {
  auto rows = csv::parse(text, source);
  Table t;
  t.id = id;
  if (rows.empty()) return t;
  const std::size_t width = rows.front().fields.size();
  t.columns.resize(width);
  std::size_t first = 0;
  if (has_header) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto& h = rows.front().fields[j];
      if (!h.empty()) t.columns[j].header = h;
    }
    first = 1;
  }
  for (std::size_t r = first; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < width; ++j) t.columns[j].values.push_back(rows[r].fields[j]);
  }
  return t;
}

inline bool has_any_header(const Table& t) {
  return std::any_of(t.columns.begin(), t.columns.end(), [](const Column& c) { return c.header.has_value(); });
}

inline std::string format_table_csv(const Table& t) {
  std::string out;
  if (has_any_header(t)) {
    std::vector<std::string> hdr;
    for (const auto& c : t.columns) hdr.push_back(c.header.value_or(""));
    out += csv::format_row(hdr);
  }
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    std::vector<std::string> row;
    for (const auto& c : t.columns) row.push_back(c.values[r]);
    out += csv::format_row(row);
  }
  return out;
}

inline constexpr const char* kTableMetadataFile = "metadata.jsonl";

// Loads and validates a lake. CSV files are ingested in filename order; labels are
// sorted; table-table labels are closed under symmetry.
inline DataLake load_datalake(const std::filesystem::path& tables_dir, const std::filesystem::path& statements_file,
                              const std::filesystem::path& labels_file,
                              const std::optional<std::filesystem::path>& table_labels_file = std::nullopt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(tables_dir)) throw ValidationError("not a directory: " + tables_dir.string());

  struct Meta {
    std::optional<std::string> caption;
    bool header = true;
  };
  std::map<std::string, Meta> meta;
  const fs::path meta_path = tables_dir / kTableMetadataFile;
  if (fs::exists(meta_path)) {
    for (const auto& [n, line] : io::lines_of(io::read_file(meta_path))) {
      try {
        auto j = nlohmann::json::parse(line);
        Meta m;
        if (j.contains("caption") && !j["caption"].is_null()) m.caption = j.at("caption").get<std::string>();
        if (j.contains("header")) m.header = j.at("header").get<bool>();
        meta[j.at("id").get<std::string>()] = m;
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(meta_path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(tables_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  DataLake lake;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    Meta m;
    if (auto it = meta.find(id); it != meta.end()) m = it->second;
    Table t = parse_table_csv(id, io::read_file(f), m.header, f.string());
    t.caption = m.caption;
    lake.tables.push_back(std::move(t));
  }

  for (const auto& [n, line] : io::lines_of(io::read_file(statements_file))) {
    try {
      auto j = nlohmann::json::parse(line);
      lake.statements.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(statements_file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }

  lake.nl_table_labels = io::read_pairs_tsv(labels_file);
  std::sort(lake.nl_table_labels.begin(), lake.nl_table_labels.end());
  if (table_labels_file) lake.table_table_labels = symmetric_closure(io::read_pairs_tsv(*table_labels_file));
  lake.validate();
  return lake;
}

// Standard on-disk layout used by the CLI and harness.
struct LakeLayout {
  std::filesystem::path root;

  std::filesystem::path tables_dir() const { return root / "tables"; }
  std::filesystem::path statements_file() const { return root / "statements.jsonl"; }
  std::filesystem::path labels_file() const { return root / "labels.tsv"; }
  std::filesystem::path table_labels_file() const { return root / "table_labels.tsv"; }
};

inline void save_datalake(const DataLake& lake, const LakeLayout& layout) {
  namespace fs = std::filesystem;
  lake.validate();
  fs::create_directories(layout.tables_dir());
  std::string meta;
  for (const auto& t : lake.tables) {
    if (t.id.find_first_of("/\\") != std::string::npos || t.id == "." || t.id == "..") {
      throw ValidationError("table id '" + t.id + "' cannot be used as a file name");
    }
    io::write_file(layout.tables_dir() / (t.id + ".csv"), format_table_csv(t));
    const bool header = has_any_header(t);
    if (t.caption || !header) {
      nlohmann::ordered_json j;
      j["id"] = t.id;
      if (t.caption) j["caption"] = *t.caption;
      if (!header) j["header"] = false;
      meta += j.dump() + "\n";
    }
  }
  if (!meta.empty()) io::write_file(layout.tables_dir() / kTableMetadataFile, meta);

  std::string statements;
  for (const auto& s : lake.statements) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["text"] = s.text;
    statements += j.dump() + "\n";
  }
  io::write_file(layout.statements_file(), statements);
  io::write_file(layout.labels_file(), io::format_pairs_tsv(lake.nl_table_labels));
  if (lake.table_table_labels) io::write_file(layout.table_labels_file(), io::format_pairs_tsv(*lake.table_table_labels));
}

inline DataLake load_datalake(const LakeLayout& layout) {
  std::optional<std::filesystem::path> tl;
  if (std::filesystem::exists(layout.table_labels_file())) tl = layout.table_labels_file();
  return load_datalake(layout.tables_dir(), layout.statements_file(), layout.labels_file(), tl);
}

// ---- splits -----------------------------------------------------------------------

struct SplitSpec {
  double train_frac = 0.2;
  double val_frac = 0.2;
  double test_frac = 0.6;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train_frac, val_frac, test_frac}) {
      if (!(f > 0.0 && f < 1.0)) throw ValidationError("split fractions must lie in (0, 1)");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
      throw ValidationError("split fractions must sum to 1");
    }
  }
};

struct IdSplit {
  std::vector<std::string> train, val, test;  // each sorted

  bool operator==(const IdSplit&) const = default;
};

struct Split {
  IdSplit statements;
  std::optional<IdSplit> tables;

  bool operator==(const Split&) const = default;
};

inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitSpec& spec) {
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n)));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= n) {
    throw ValidationError("corpus of " + std::to_string(n) + " ids is too small for a nonempty three-way split");
  }
  return {n_train, n_val, n - n_train - n_val};
}

inline IdSplit split_ids(std::vector<std::string> ids, const SplitSpec& spec, std::uint64_t stream) {
  std::sort(ids.begin(), ids.end());
  const auto sizes = split_sizes(ids.size(), spec);
  Rng rng(Rng::derive(spec.seed, stream));
  rng.shuffle(ids);
  IdSplit out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                 ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), ids.end());
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

// Partitions statement ids, and table ids when table-table labels exist.
inline Split split(const DataLake& lake, const SplitSpec& spec) {
  spec.validate();
  Split out;
  std::vector<std::string> sids;
  for (const auto& s : lake.statements) sids.push_back(s.id);
  out.statements = split_ids(std::move(sids), spec, 1);
  if (lake.table_table_labels) {
    std::vector<std::string> tids;
    for (const auto& t : lake.tables) tids.push_back(t.id);
    out.tables = split_ids(std::move(tids), spec, 2);
  }
  return out;
}

inline nlohmann::ordered_json split_to_json(const Split& s) {
  auto ids = [](const IdSplit& x) {
    nlohmann::ordered_json j;
    j["train"] = x.train;
    j["val"] = x.val;
    j["test"] = x.test;
    return j;
  };
  nlohmann::ordered_json j;
  j["statements"] = ids(s.statements);
  if (s.tables) j["tables"] = ids(*s.tables);
  return j;
}

inline Split split_from_json(const nlohmann::json& j) {
  auto ids = [](const nlohmann::json& x) {
    IdSplit s;
    s.train = x.at("train").get<std::vector<std::string>>();
    s.val = x.at("val").get<std::vector<std::string>>();
    s.test = x.at("test").get<std::vector<std::string>>();
    return s;
  };
  Split s;
  s.statements = ids(j.at("statements"));
  if (j.contains("tables")) s.tables = ids(j.at("tables"));
  return s;
}

}  // namespace lakescout
