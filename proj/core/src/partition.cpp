#include "hha/partition.hpp"

#include "hha/simplex.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hha::partition {

SoftmaxPartition SoftmaxPartition::from_params(const rslds::RsldsParams& params, const Vec& lower, const Vec& upper) {
  SoftmaxPartition p;
  p.W.resize(params.K, params.M + params.N);
  p.W << params.W_x, params.W_u;
  p.r = params.r;
  p.lower = lower;
  p.upper = upper;
  p.validate();
  return p;
}

void SoftmaxPartition::validate() const {
  require(W.rows() >= 1 && r.size() == W.rows(), "partition: W/r shape");
  require(lower.size() == W.cols() && upper.size() == W.cols(), "partition: bound shape");
  for (Eigen::Index d = 0; d < lower.size(); ++d)
    require(std::isfinite(lower(d)) && std::isfinite(upper(d)) && lower(d) < upper(d),
            "partition: bounds must be finite with lower < upper");
}

Mode SoftmaxPartition::label(const Vec& v) const {
  const Vec logits = W * v + r;
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k)
    if (logits(k) > logits(best)) best = k;
  return static_cast<Mode>(best);
}

Vec SoftmaxPartition::probabilities(const Vec& v) const {
  const Vec logits = W * v + r;
  Vec p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

AdjacencyMatrix::AdjacencyMatrix(int regions, bool value)
    : size_(regions), cells_(static_cast<std::size_t>(regions * regions), value ? 1 : 0) {}

std::size_t AdjacencyMatrix::index(Mode i, Mode j) const {
  require(i >= 0 && j >= 0 && i < size_ && j < size_, "adjacency: index out of range");
  return static_cast<std::size_t>(i * size_ + j);
}

void AdjacencyMatrix::set(Mode i, Mode j, bool value) { cells_[index(i, j)] = value ? 1 : 0; }

void AdjacencyMatrix::set_symmetric(Mode i, Mode j, bool value) {
  set(i, j, value);
  set(j, i, value);
}

AdjacencyMatrix AdjacencyMatrix::permuted(const std::vector<Mode>& permutation) const {
  require(static_cast<int>(permutation.size()) == size_, "adjacency: permutation size");
  AdjacencyMatrix out(size_);
  for (Mode i = 0; i < size_; ++i)
    for (Mode j = 0; j < size_; ++j)
      out.set(permutation[static_cast<std::size_t>(i)], permutation[static_cast<std::size_t>(j)], (*this)(i, j));
  return out;
}

nlohmann::json AdjacencyMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Mode i = 0; i < size_; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Mode j = 0; j < size_; ++j) row.push_back((*this)(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

/// Rows (W_k - W_i) v <= r_i - r_k for k != i.
void cell_constraints(const SoftmaxPartition& p, Mode i, Mat& A, Vec& b) {
  const int K = p.regions();
  A.resize(K - 1, p.dim());
  b.resize(K - 1);
  Eigen::Index row = 0;
  for (int k = 0; k < K; ++k) {
    if (k == i) continue;
    A.row(row) = p.W.row(k) - p.W.row(i);
    b(row) = p.r(i) - p.r(k);
    ++row;
  }
}

}  // namespace

double boundary_gap(const SoftmaxPartition& p, Mode i, Mode j) {
  require(i != j && i >= 0 && j >= 0 && i < p.regions() && j < p.regions(), "boundary_gap: invalid region pair");
  Mat A;
  Vec b;
  cell_constraints(p, i, A, b);
  const Vec c = (p.W.row(i) - p.W.row(j)).transpose();
  const auto res = lp::minimize(c, A, b, p.lower, p.upper);
  if (res.status != lp::LpStatus::Optimal) return std::numeric_limits<double>::infinity();
  return res.value + (p.r(i) - p.r(j));
}

double interior_margin(const SoftmaxPartition& p, Mode i) {
  require(i >= 0 && i < p.regions(), "interior_margin: region out of range");
  const int K = p.regions();
  if (K == 1) return std::numeric_limits<double>::infinity();
  const int D = p.dim();
  // Variables (v, t): maximise t s.t. (W_k - W_i) v + t <= r_i - r_k.
  double span = 1.0;
  for (int k = 0; k < K; ++k) {
    const Vec diff = (p.W.row(i) - p.W.row(k)).transpose();
    double bound = std::abs(p.r(i) - p.r(k));
    for (int d = 0; d < D; ++d) bound += std::abs(diff(d)) * std::max(std::abs(p.lower(d)), std::abs(p.upper(d)));
    span = std::max(span, bound + 1.0);
  }
  Mat A(K - 1, D + 1);
  Vec b(K - 1);
  Eigen::Index row = 0;
  for (int k = 0; k < K; ++k) {
    if (k == i) continue;
    A.row(row).head(D) = p.W.row(k) - p.W.row(i);
    A(row, D) = 1.0;
    b(row) = p.r(i) - p.r(k);
    ++row;
  }
  Vec lower(D + 1), upper(D + 1), c = Vec::Zero(D + 1);
  lower << p.lower, -span;
  upper << p.upper, span;
  c(D) = -1.0;
  const auto res = lp::minimize(c, A, b, lower, upper);
  if (res.status != lp::LpStatus::Optimal) return -std::numeric_limits<double>::infinity();
  return -res.value;
}

bool region_nonempty(const SoftmaxPartition& p, Mode i, const AdjacencyConfig& config) {
  return interior_margin(p, i) > config.epsilon;
}

bool is_adjacent(const SoftmaxPartition& p, Mode i, Mode j, const AdjacencyConfig& config) {
  require(i != j, "is_adjacent: requires distinct regions");
  if (!region_nonempty(p, i, config) || !region_nonempty(p, j, config)) return false;
  return boundary_gap(p, i, j) <= config.epsilon;
}

AdjacencyReport build_adjacency(const SoftmaxPartition& p, const AdjacencyConfig& config) {
  p.validate();
  const int K = p.regions();
  AdjacencyReport report;
  report.adjacency = AdjacencyMatrix(K);
  std::vector<bool> nonempty(static_cast<std::size_t>(K));
  for (Mode i = 0; i < K; ++i) {
    report.adjacency.set(i, i, true);
    nonempty[static_cast<std::size_t>(i)] = region_nonempty(p, i, config);
    if (!nonempty[static_cast<std::size_t>(i)]) {
      report.empty_regions.push_back(i);
      report.diagnostics.push_back("region " + std::to_string(i) + " is empty within bounds");
    }
  }
  for (Mode i = 0; i < K; ++i)
    for (Mode j = i + 1; j < K; ++j) {
      if (!nonempty[static_cast<std::size_t>(i)] || !nonempty[static_cast<std::size_t>(j)]) continue;
      if (boundary_gap(p, i, j) <= config.epsilon) report.adjacency.set_symmetric(i, j, true);
    }
  return report;
}

}  // namespace hha::partition
