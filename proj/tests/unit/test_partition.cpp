#include "hha/partition.hpp"
#include "hha_oracles/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace hha;
using namespace hha::partition;

namespace {

SoftmaxPartition make(const Mat& W, const Vec& r, double lo, double hi) {
  SoftmaxPartition p;
  p.W = W;
  p.r = r;
  p.lower = Vec::Constant(W.cols(), lo);
  p.upper = Vec::Constant(W.cols(), hi);
  return p;
}

// Logits 0, x, 2x - 1: argmax boundaries at x = 0 and x = 1.
SoftmaxPartition three_slabs(double lo, double hi) {
  return make((Mat(3, 1) << 0.0, 1.0, 2.0).finished(), (Vec(3) << 0.0, 0.0, -1.0).finished(), lo, hi);
}

}  // namespace

TEST_CASE("two half-spaces are always adjacent") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    Mat W(2, 2);
    W << n(rng), n(rng), n(rng), n(rng);
    const auto p = make(W, Vec::Zero(2), -100.0, 100.0);
    CHECK(is_adjacent(p, 0, 1));
    CHECK(build_adjacency(p).adjacency == AdjacencyMatrix(2, true));
  }
}

TEST_CASE("parallel slabs are adjacent only to their neighbours") {
  const auto p = three_slabs(-3.0, 4.0);
  CHECK(is_adjacent(p, 0, 1));
  CHECK(is_adjacent(p, 1, 2));
  CHECK_FALSE(is_adjacent(p, 0, 2));
  const auto grid = oracle::grid_adjacency(p, 200);
  CHECK(grid.adjacency == build_adjacency(p).adjacency);
}

TEST_CASE("a region outside the box is adjacent to nothing") {
  const auto p = three_slabs(-3.0, 0.5);
  const auto report = build_adjacency(p);
  REQUIRE(report.empty_regions == std::vector<Mode>{2});
  CHECK_FALSE(report.adjacency(1, 2));
  CHECK_FALSE(report.adjacency(0, 2));
  CHECK(report.adjacency(0, 1));
  CHECK_FALSE(report.diagnostics.empty());
  CHECK(oracle::grid_adjacency(p, 200).cell_counts[2] == 0);
}

TEST_CASE("adjacency is symmetric with a true diagonal") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    Mat W(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) W(i, j) = n(rng);
    const auto adj = build_adjacency(make(W, Vec::Zero(5), -1.0, 1.0)).adjacency;
    for (int i = 0; i < 5; ++i) {
      CHECK(adj(i, i));
      for (int j = 0; j < 5; ++j) CHECK(adj(i, j) == adj(j, i));
    }
  }
}

TEST_CASE("relabelling permutes the matrix") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  Mat W(4, 2);
  Vec r(4);
  for (int i = 0; i < 4; ++i) {
    W.row(i) << n(rng), n(rng);
    r(i) = n(rng);
  }
  const auto p = make(W, r, -1.0, 1.0);
  const std::vector<Mode> perm{2, 0, 3, 1};  // old i -> new perm[i]
  SoftmaxPartition q = p;
  for (int i = 0; i < 4; ++i) {
    q.W.row(perm[i]) = p.W.row(i);
    q.r(perm[i]) = p.r(i);
  }
  CHECK(build_adjacency(q).adjacency == build_adjacency(p).adjacency.permuted(perm));
}

TEST_CASE("adding a shared row to W and constant to r changes nothing") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  Mat W(4, 2);
  for (int i = 0; i < 4; ++i) W.row(i) << n(rng), n(rng);
  const auto p = make(W, Vec::Zero(4), -1.0, 1.0);
  SoftmaxPartition q = p;
  q.W.rowwise() += Eigen::RowVector2d(3.0, -7.0);
  q.r.array() += 5.0;
  CHECK(build_adjacency(q).adjacency == build_adjacency(p).adjacency);
}

TEST_CASE("labels break ties toward the lowest index") {
  const auto p = make(Mat::Zero(3, 1), Vec::Zero(3), -1.0, 1.0);
  CHECK(p.label(Vec::Zero(1)) == 0);
  const auto slabs = three_slabs(-3.0, 4.0);
  CHECK(slabs.label(Vec::Constant(1, -1.0)) == 0);
  CHECK(slabs.label(Vec::Constant(1, 0.5)) == 1);
  CHECK(slabs.label(Vec::Constant(1, 2.0)) == 2);
}

TEST_CASE("invalid partitions are rejected") {
  auto p = three_slabs(-1.0, 1.0);
  p.upper(0) = -2.0;
  CHECK_THROWS_AS(p.validate(), ContractViolation);
  CHECK_THROWS_AS(is_adjacent(three_slabs(-1.0, 1.0), 1, 1), ContractViolation);
}
