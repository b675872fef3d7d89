#include <catch_amalgamated.hpp>

#include "lakescout.hpp"
#include "test_util.hpp"

#include <set>

using namespace lakescout;
namespace fs = std::filesystem;

namespace {

void write_minimal_lake(const fs::path& root) {
  io::write_file(root / "tables" / "state.csv", "state,capital\nOhio,Columbus\nUtah,Salt Lake City\n");
  io::write_file(root / "statements.jsonl", "{\"id\": \"s1\", \"text\": \"capital of ohio\"}\n");
  io::write_file(root / "labels.tsv", "s1\tstate\n");
}

std::string read_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + io::read_file(f) + "\n";
  return out;
}

}  // namespace

TEST_CASE("minimal lake loads one table, one statement and one label", "[corpus]") {
  testutil::TempDir dir("corpus_min");
  write_minimal_lake(dir.path());
  const DataLake lake = load_datalake(LakeLayout{dir.path()});
  REQUIRE(lake.tables.size() == 1);
  REQUIRE(lake.statements.size() == 1);
  REQUIRE(lake.nl_table_labels.size() == 1);
  CHECK(lake.tables[0].id == "state");
  CHECK(lake.tables[0].columns.size() == 2);
  CHECK(lake.tables[0].columns[0].header == "state");
  CHECK(lake.tables[0].columns[1].values[1] == "Salt Lake City");
  CHECK_FALSE(lake.table_table_labels.has_value());
}

TEST_CASE("dangling label ids are listed in the validation error", "[corpus]") {
  testutil::TempDir dir("corpus_dangling");
  write_minimal_lake(dir.path());
  io::write_file(dir.path() / "labels.tsv", "s1\tstate\ns1\tt99\n");
  REQUIRE_THROWS_WITH(load_datalake(LakeLayout{dir.path()}), Catch::Matchers::ContainsSubstring("t99"));
}

TEST_CASE("duplicate ids are rejected", "[corpus]") {
  testutil::TempDir dir("corpus_dup");
  write_minimal_lake(dir.path());
  io::write_file(dir.path() / "statements.jsonl",
                 "{\"id\": \"s1\", \"text\": \"a\"}\n{\"id\": \"s1\", \"text\": \"b\"}\n");
  REQUIRE_THROWS_WITH(load_datalake(LakeLayout{dir.path()}), Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("malformed csv rows name the file and line", "[corpus]") {
  testutil::TempDir dir("corpus_csv");
  write_minimal_lake(dir.path());
  io::write_file(dir.path() / "tables" / "state.csv", "state,capital\nOhio,Columbus\nUtah\n");
  try {
    load_datalake(LakeLayout{dir.path()});
    FAIL("expected an ingestion error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("state.csv"));
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring(":3:"));
  }
}

TEST_CASE("quoted csv fields survive a format and parse round trip", "[corpus]") {
  Table t;
  t.id = "q";
  t.columns = {{std::string("name"), {"a,b", "say \"hi\"", "line\nbreak"}}, {std::nullopt, {"1", "2", "3"}}};
  const Table back = parse_table_csv("q", format_table_csv(t), true, "q.csv");
  CHECK(back == t);
}

TEST_CASE("synthetic lake round-trips through save and load byte for byte", "[corpus]") {
  SyntheticSpec spec;
  spec.n_clusters = 4;
  spec.tables_per_cluster = 3;
  spec.statements_per_cluster = 10;
  spec.seed = 5;
  const DataLake lake = generate_synthetic_lake(spec);
  REQUIRE(lake.tables.size() == 12);
  REQUIRE(lake.statements.size() == 40);

  testutil::TempDir a("corpus_rt_a"), b("corpus_rt_b");
  save_datalake(lake, LakeLayout{a.path()});
  const DataLake loaded = load_datalake(LakeLayout{a.path()});
  CHECK(loaded == lake);
  save_datalake(loaded, LakeLayout{b.path()});
  CHECK(read_tree(a.path()) == read_tree(b.path()));
}

TEST_CASE("table-table labels are closed under symmetry on load", "[corpus]") {
  testutil::TempDir dir("corpus_tt");
  write_minimal_lake(dir.path());
  io::write_file(dir.path() / "tables" / "city.csv", "city\nColumbus\n");
  io::write_file(dir.path() / "table_labels.tsv", "state\tcity\n");
  const DataLake lake = load_datalake(LakeLayout{dir.path()});
  REQUIRE(lake.table_table_labels);
  CHECK(*lake.table_table_labels == std::vector<LabelPair>{{"city", "state"}, {"state", "city"}});
}

namespace {

DataLake lake_with_statements(std::size_t n) {
  DataLake lake;
  lake.tables.push_back({"t0", std::nullopt, {{std::string("c"), {"x"}}}});
  for (std::size_t i = 0; i < n; ++i) lake.statements.push_back({"s" + std::to_string(i), "text " + std::to_string(i)});
  return lake;
}

}  // namespace

TEST_CASE("split sizes follow the fractions", "[corpus]") {
  const SplitSpec spec{0.2, 0.2, 0.6, 7};
  const Split s = split(lake_with_statements(10), spec);
  CHECK(s.statements.train.size() == 2);
  CHECK(s.statements.val.size() == 2);
  CHECK(s.statements.test.size() == 6);
  CHECK_FALSE(s.tables.has_value());
  CHECK(split_sizes(1380, spec) == std::array<std::size_t, 3>{276, 276, 828});
}

TEST_CASE("split is a deterministic partition", "[corpus]") {
  const DataLake lake = lake_with_statements(50);
  const SplitSpec spec{0.2, 0.2, 0.6, 7};
  const Split a = split(lake, spec), b = split(lake, spec);
  CHECK(a == b);
  std::set<std::string> all;
  for (const auto* v : {&a.statements.train, &a.statements.val, &a.statements.test}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 50);
  CHECK(split_from_json(nlohmann::json::parse(split_to_json(a).dump())) == a);
  const Split c = split(lake, SplitSpec{0.2, 0.2, 0.6, 8});
  CHECK(c.statements.train != a.statements.train);
}

TEST_CASE("split rejects corpora too small for three nonempty parts", "[corpus]") {
  CHECK_THROWS_AS(split(lake_with_statements(2), SplitSpec{0.2, 0.2, 0.6, 0}), ValidationError);
  CHECK_THROWS_AS(split(lake_with_statements(10), SplitSpec{0.5, 0.5, 0.5, 0}), ValidationError);
}

TEST_CASE("split partitions tables when table-table labels exist", "[corpus]") {
  DataLake lake = lake_with_statements(10);
  lake.tables.clear();
  for (int i = 0; i < 10; ++i) lake.tables.push_back({"t" + std::to_string(i), std::nullopt, {{std::nullopt, {"v"}}}});
  lake.table_table_labels = symmetric_closure({{"t0", "t1"}});
  const Split s = split(lake, SplitSpec{0.2, 0.2, 0.6, 3});
  REQUIRE(s.tables);
  CHECK(s.tables->train.size() == 2);
  CHECK(s.tables->test.size() == 6);
}
