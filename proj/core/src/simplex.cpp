#include "hha/simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace hha::lp {
namespace {

constexpr double kTol = 1e-10;

class Tableau {
 public:
  Tableau(Mat table, std::vector<Eigen::Index> basis, Eigen::Index forbidden_from)
      : table_(std::move(table)), basis_(std::move(basis)), forbidden_from_(forbidden_from) {}

  Mat& table() { return table_; }
  std::vector<Eigen::Index>& basis() { return basis_; }
  Eigen::Index rows() const { return table_.rows(); }
  Eigen::Index vars() const { return table_.cols() - 1; }
  double rhs(Eigen::Index i) const { return table_(i, table_.cols() - 1); }

  void pivot(Eigen::Index row, Eigen::Index col, Vec& reduced, double& objective) {
    table_.row(row) /= table_(row, col);
    for (Eigen::Index i = 0; i < rows(); ++i) {
      if (i == row) continue;
      const double f = table_(i, col);
      if (f != 0.0) table_.row(i) -= f * table_.row(row);
    }
    const double f = reduced(col);
    if (f != 0.0) {
      reduced -= f * table_.row(row).head(vars()).transpose();
      objective -= f * rhs(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
  }

  /// Runs Bland's-rule iterations on `reduced` (reduced costs) with the
  /// running objective. Returns false when unbounded.
  bool optimise(Vec& reduced, double& objective) {
    for (int guard = 0; guard < 100000; ++guard) {
      Eigen::Index entering = -1;
      for (Eigen::Index j = 0; j < forbidden_from_; ++j)
        if (reduced(j) < -kTol) {
          entering = j;
          break;
        }
      if (entering < 0) return true;
      Eigen::Index leaving = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < rows(); ++i) {
        const double a = table_(i, entering);
        if (a <= kTol) continue;
        const double ratio = rhs(i) / a;
        if (ratio < best - kTol ||
            (std::abs(ratio - best) <= kTol && leaving >= 0 &&
             basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leaving)])) {
          best = ratio;
          leaving = i;
        }
      }
      if (leaving < 0) return false;
      pivot(leaving, entering, reduced, objective);
    }
    return true;
  }

  void allow_all(Eigen::Index n) { forbidden_from_ = n; }

 private:
  Mat table_;
  std::vector<Eigen::Index> basis_;
  Eigen::Index forbidden_from_;
};

}  // namespace

LpResult minimize(const Vec& c, const Mat& A, const Vec& b, const Vec& lower, const Vec& upper) {
  const auto n = c.size();
  require(A.cols() == n && A.rows() == b.size(), "lp: constraint shape mismatch");
  require(lower.size() == n && upper.size() == n, "lp: bound shape mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    require(std::isfinite(lower(i)) && std::isfinite(upper(i)), "lp: bounds must be finite");

  LpResult result;
  for (Eigen::Index i = 0; i < n; ++i)
    if (lower(i) > upper(i)) return result;

  // x = lower + w,  0 <= w;  rows: A w <= b - A lower,  w_i <= upper_i - lower_i.
  const auto m = A.rows();
  const auto rows = m + n;
  Mat G(rows, n);
  Vec h(rows);
  G.topRows(m) = A;
  h.head(m) = b - A * lower;
  G.bottomRows(n).setIdentity();
  h.tail(n) = upper - lower;

  std::vector<Eigen::Index> artificial_rows;
  for (Eigen::Index i = 0; i < rows; ++i)
    if (h(i) < 0.0) artificial_rows.push_back(i);
  const auto n_art = static_cast<Eigen::Index>(artificial_rows.size());
  const auto slack0 = n;
  const auto art0 = n + rows;
  const auto total = n + rows + n_art;

  Mat table = Mat::Zero(rows, total + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
  Eigen::Index next_art = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double sign = h(i) < 0.0 ? -1.0 : 1.0;
    table.row(i).head(n) = sign * G.row(i);
    table(i, slack0 + i) = sign;
    table(i, total) = sign * h(i);
    if (sign < 0.0) {
      table(i, art0 + next_art) = 1.0;
      basis[static_cast<std::size_t>(i)] = art0 + next_art;
      ++next_art;
    } else {
      basis[static_cast<std::size_t>(i)] = slack0 + i;
    }
  }

  Tableau tab(std::move(table), std::move(basis), total);
  if (n_art > 0) {
    Vec reduced = Vec::Zero(total);
    reduced.tail(n_art).setOnes();
    double objective = 0.0;
    for (auto i : artificial_rows) {
      reduced -= tab.table().row(i).head(total).transpose();
      objective -= tab.rhs(i);
    }
    tab.optimise(reduced, objective);
    if (-objective > 1e-8 * (1.0 + h.cwiseAbs().maxCoeff())) return result;  // infeasible
    // Drive remaining artificials out of the basis where possible.
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (tab.basis()[static_cast<std::size_t>(i)] < art0) continue;
      for (Eigen::Index j = 0; j < art0; ++j)
        if (std::abs(tab.table()(i, j)) > kTol) {
          Vec dummy = Vec::Zero(total);
          double dummy_obj = 0.0;
          tab.pivot(i, j, dummy, dummy_obj);
          break;
        }
    }
    tab.allow_all(art0);
  } else {
    tab.allow_all(art0);
  }

  Vec cost = Vec::Zero(total);
  cost.head(n) = c;
  Vec reduced = cost;
  double objective = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double cb = cost(tab.basis()[static_cast<std::size_t>(i)]);
    if (cb != 0.0) {
      reduced -= cb * tab.table().row(i).head(total).transpose();
      objective -= cb * tab.rhs(i);
    }
  }
  if (!tab.optimise(reduced, objective)) {
    result.status = LpStatus::Unbounded;
    return result;
  }

  Vec w = Vec::Zero(n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto var = tab.basis()[static_cast<std::size_t>(i)];
    if (var < n) w(var) = tab.rhs(i);
  }
  result.status = LpStatus::Optimal;
  result.x = (lower + w).cwiseMax(lower).cwiseMin(upper);
  result.value = c.dot(result.x);
  return result;
}

}  // namespace hha::lp
