#include <catch_amalgamated.hpp>

#include "lakescout.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lakescout;

namespace {

Matrix gaussian_rows(std::size_t n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Matrix m(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(gen);
  return m;
}

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("v" + std::to_string(i));
  return ids;
}

std::vector<std::string> ids_of(const std::vector<ScoredId>& r) {
  std::vector<std::string> out;
  for (const auto& s : r) out.push_back(s.id);
  return out;
}

}  // namespace

TEST_CASE("single-vector index returns that vector", "[annindex]") {
  const AnnIndex idx = AnnIndex::build({"only"}, Matrix::Ones(1, 3));
  const auto r = idx.query(Vector::Ones(3), 5);
  REQUIRE(r.size() == 1);
  CHECK(r[0].id == "only");
  CHECK(r[0].score == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("small corpora use exact search matching brute force", "[annindex]") {
  const Matrix v = gaussian_rows(500, 16, 1);
  const auto ids = make_ids(500);
  const AnnIndex idx = AnnIndex::build(ids, v);
  CHECK(idx.exact_mode());
  const Matrix q = gaussian_rows(50, 16, 2);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Vector qi = q.row(i).transpose();
    CHECK(ids_of(idx.query(qi, 10)) == oracle::top_k(ids, idx.vectors(), qi, 10));
  }
}

TEST_CASE("approximate recall is high in low dimensions", "[annindex]") {
  const Matrix v = gaussian_rows(5000, 4, 3);
  const auto ids = make_ids(5000);
  const AnnIndex idx = AnnIndex::build(ids, v, AnnConfig{10, 16, 4});
  REQUIRE_FALSE(idx.exact_mode());
  const Matrix q = gaussian_rows(100, 4, 5);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Vector qi = q.row(i).transpose();
    const auto want = oracle::top_k(ids, idx.vectors(), qi, 10);
    const auto got = ids_of(idx.query(qi, 10, 100));
    CHECK(ids_of(idx.brute_force(qi, 10)) == want);
    for (const auto& id : got) hit += std::find(want.begin(), want.end(), id) != want.end();
  }
  CHECK(static_cast<double>(hit) / 1000.0 >= 0.95);
}

TEST_CASE("every indexed vector retrieves itself first", "[annindex]") {
  const Matrix v = gaussian_rows(2000, 4, 6);
  const auto ids = make_ids(2000);
  const AnnIndex idx = AnnIndex::build(ids, v);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const auto r = idx.query(v.row(i).transpose(), 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].id == ids[static_cast<std::size_t>(i)]);
    CHECK(r[0].score == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("axis and diagonal vectors score by cosine", "[annindex]") {
  Matrix v(2, 2);
  v << 1, 0, 1, 1;
  const AnnIndex idx = AnnIndex::build({"e1", "diag"}, v);
  const auto r = idx.query(Vector::Unit(2, 0), 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].id == "e1");
  CHECK(r[0].score == Catch::Approx(1.0).margin(1e-6));
  CHECK(r[1].id == "diag");
  CHECK(r[1].score == Catch::Approx(std::sqrt(0.5)).margin(1e-6));
}

TEST_CASE("a zero query ranks by id", "[annindex]") {
  const AnnIndex idx = AnnIndex::build({"c", "a", "b"}, gaussian_rows(3, 3, 7));
  const auto r = idx.query(Vector::Zero(3), 3);
  CHECK(ids_of(r) == std::vector<std::string>{"a", "b", "c"});
  for (const auto& s : r) CHECK(s.score == 0.0);
}

TEST_CASE("k beyond the corpus returns every vector", "[annindex]") {
  const auto ids = make_ids(7);
  const AnnIndex idx = AnnIndex::build(ids, gaussian_rows(7, 3, 8));
  auto got = ids_of(idx.query(Vector::Ones(3), 100));
  std::sort(got.begin(), got.end());
  auto want = ids;
  std::sort(want.begin(), want.end());
  CHECK(got == want);
}

TEST_CASE("saved index answers identically after loading", "[annindex]") {
  const auto ids = make_ids(3000);
  const AnnIndex idx = AnnIndex::build(ids, gaussian_rows(3000, 8, 9), AnnConfig{5, 8, 1});
  testutil::TempDir dir("ann");
  idx.save(dir.path() / "i.bin");
  const AnnIndex back = AnnIndex::load(dir.path() / "i.bin");
  CHECK(back.serialize() == idx.serialize());
  const Matrix q = gaussian_rows(100, 8, 10);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Vector qi = q.row(i).transpose();
    CHECK(back.query(qi, 10) == idx.query(qi, 10));
  }
}

TEST_CASE("index loading rejects damaged files", "[annindex]") {
  const AnnIndex idx = AnnIndex::build(make_ids(20), gaussian_rows(20, 4, 11));
  testutil::TempDir dir("ann_bad");
  const std::string bytes = idx.serialize();
  io::write_file(dir.path() / "short.bin", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(AnnIndex::load(dir.path() / "short.bin"), ValidationError);
  io::write_file(dir.path() / "junk.bin", "not an index");
  CHECK_THROWS_AS(AnnIndex::load(dir.path() / "junk.bin"), ValidationError);
}

TEST_CASE("index rejects bad inputs", "[annindex]") {
  const AnnIndex idx = AnnIndex::build(make_ids(5), gaussian_rows(5, 4, 12));
  CHECK_THROWS_AS(idx.query(Vector::Ones(3), 2), ValidationError);
  CHECK_THROWS_AS(idx.query(Vector::Ones(4), 0), ValidationError);
  CHECK_THROWS_AS(AnnIndex::build({}, Matrix(0, 4)), ValidationError);
  CHECK_THROWS_AS(AnnIndex::build({"a"}, gaussian_rows(2, 4, 1)), ValidationError);
  Matrix nan = Matrix::Ones(1, 2);
  nan(0, 1) = std::nan("");
  CHECK_THROWS_AS(AnnIndex::build({"a"}, nan), ValidationError);
}
