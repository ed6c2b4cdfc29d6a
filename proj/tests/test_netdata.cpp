#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "netmix/errors.hpp"
#include "netmix/netdata.hpp"

using namespace netmix;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("netmix_test_netdata_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("load_connection_matrix: smallest symmetric case") {
  const auto dir = temp_dir("small");
  write_text(dir / "s1.csv", "0,0.3\n0.3,0\n");
  const auto net = load_connection_matrix(dir / "s1.csv", "s1");
  CHECK(net.n() == 2);
  CHECK(net.weights(0, 1) == 0.3);
  CHECK(net.subject_id == "s1");
}

TEST_CASE("load_connection_matrix: header line is skipped") {
  const auto dir = temp_dir("header");
  write_text(dir / "m.csv", "a,b,c\n0,0.1,0.2\n0.1,0,0\n0.2,0,0\n");
  CHECK(load_connection_matrix(dir / "m.csv", "m").n() == 3);
}

TEST_CASE("load_connection_matrix: entry equal to one is rejected with its location") {
  const auto dir = temp_dir("pole");
  write_text(dir / "m.csv", "0,0.1,1.0\n0.1,0,0\n1.0,0,0\n");
  try {
    load_connection_matrix(dir / "m.csv", "m");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "weight ≥ 1 at (0,2)");
  }
}

TEST_CASE("load_connection_matrix: error paths") {
  const auto dir = temp_dir("errors");
  write_text(dir / "ns.csv", "0,0.1\n0.1,0\n0.2,0.2\n");
  CHECK_THROWS_AS(load_connection_matrix(dir / "ns.csv", "ns"), DataError);
  write_text(dir / "asym.csv", "0,0.1\n0.2,0\n");
  CHECK_THROWS_AS(load_connection_matrix(dir / "asym.csv", "asym"), DataError);
  write_text(dir / "nan.csv", "0,nan\nnan,0\n");
  CHECK_THROWS_AS(load_connection_matrix(dir / "nan.csv", "nan"), DataError);
}

TEST_CASE("load_connection_matrix: tiny asymmetry is averaged, diagonal zeroed") {
  Eigen::MatrixXd raw(2, 2);
  raw << 0.5, 0.3, 0.3 + 5e-9, 0.0;
  const auto net = network_from_matrix(raw, "x");
  CHECK(net.weights(0, 0) == 0.0);
  CHECK(net.weights(0, 1) == net.weights(1, 0));
  CHECK(net.weights(0, 1) == doctest::Approx(0.3 + 2.5e-9).epsilon(1e-15));
}

TEST_CASE("clamp_negative_weights") {
  Eigen::MatrixXd a(2, 2);
  a << 0, -0.2, -0.2, 0;
  CHECK(clamp_negative_weights(a).weights(0, 1) == 0.0);

  Eigen::MatrixXd pos(2, 2);
  pos << 0, 0.4, 0.4, 0;
  CHECK(clamp_negative_weights(pos).weights == pos);

  Eigen::MatrixXd mixed(4, 4);
  mixed << 0, -0.1, 0.2, 0.3,  //
      -0.1, 0, 0.5, 0.0,       //
      0.2, 0.5, 0, 0.6,        //
      0.3, 0.0, 0.6, 0;
  mixed(0, 1) = -0.1;
  mixed(2, 3) = -0.6;  // asymmetric here is fine: clamp is elementwise
  int negatives = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) negatives += mixed(r, c) < 0;
  const int zeros_before = static_cast<int>((mixed.array() == 0.0).count());
  const auto net = clamp_negative_weights(mixed);
  CHECK(negatives == 3);
  CHECK(static_cast<int>((net.weights.array() == 0.0).count()) - zeros_before == 3);
  CHECK(clamp_negative_weights(net.weights).weights == net.weights);  // idempotent
}

TEST_CASE("presence/absence counts cover every dyad") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.9);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(90, 90);
  for (int j = 0; j < 90; ++j)
    for (int k = j + 1; k < 90; ++k) m(j, k) = m(k, j) = u(rng);
  const auto dir = temp_dir("big");
  write_connection_matrix(dir / "s.csv", network_from_matrix(m, "s"));
  const auto net = load_connection_matrix(dir / "s.csv", "s");
  CHECK(net.n() == 90);
  CHECK(net.n_dyads() == 4005);
  std::size_t absent = 0;
  for (int j = 0; j < 90; ++j)
    for (int k = j + 1; k < 90; ++k) absent += net.weights(j, k) == 0.0;
  CHECK(net.n_present() + absent == 4005);
  CHECK(net.weights == network_from_matrix(m, "s").weights);  // text round trip is exact
}

TEST_CASE("optional absolute cutoff") {
  Eigen::MatrixXd m(3, 3);
  m << 0, 0.05, 0.4, 0.05, 0, 0.2, 0.4, 0.2, 0;
  LoadOptions o;
  o.min_weight = 0.1;
  const auto net = network_from_matrix(m, "c", o);
  CHECK(net.weights(0, 1) == 0.0);
  CHECK(net.weights(1, 2) == 0.2);
}

TEST_CASE("compute_distances") {
  NodeAtlas atlas;
  atlas.labels = {"a", "b", "c", "d"};
  atlas.coords_mm.resize(4, 3);
  atlas.coords_mm << 0, 0, 0,  //
      100, 0, 0,               //
      30, 40, 0,               //
      0, 0, 0;
  const auto d = compute_distances(atlas);
  CHECK(d.dm(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.dm(0, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.dm(0, 3) == 0.0);
  CHECK(d.dm.diagonal().isZero());
  CHECK((d.dm - d.dm.transpose()).isZero());
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) CHECK(d.dm(i, k) <= d.dm(i, j) + d.dm(j, k) + 1e-15);

  NodeAtlas moved = atlas;
  moved.coords_mm.rowwise() += Eigen::RowVector3d(12.5, -40.0, 7.25);
  CHECK((compute_distances(moved).dm - d.dm).cwiseAbs().maxCoeff() < 1e-12);

  atlas.coords_mm(2, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(compute_distances(atlas), DataError);
}

TEST_CASE("atlas and subject tables round trip through their file formats") {
  const auto dir = temp_dir("tables");
  NodeAtlas atlas;
  atlas.labels = {"L", "R"};
  atlas.coords_mm.resize(2, 3);
  atlas.coords_mm << -1.5, 2, 3, 4, 5, 6.125;
  write_atlas(dir / "atlas.csv", atlas);
  const auto back = load_atlas(dir / "atlas.csv");
  CHECK(back.labels == atlas.labels);
  CHECK(back.coords_mm == atlas.coords_mm);

  std::vector<SubjectCovariates> subs{{"s1", 0, 1, 12.0}, {"s2", 1, 0, 16.5}};
  write_subjects(dir / "subjects.csv", subs);
  const auto sb = load_subjects(dir / "subjects.csv");
  REQUIRE(sb.size() == 2);
  CHECK(sb[1].subject_id == "s2");
  CHECK(sb[1].group == 1);
  CHECK(sb[1].education_years == 16.5);

  write_text(dir / "bad.csv", "subject_id,group,sex,education_years\ns1,2,0,12\n");
  CHECK_THROWS_AS(load_subjects(dir / "bad.csv"), DataError);
}
