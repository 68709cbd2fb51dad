#pragma once

#include "hha/types.hpp"

#include <vector>

namespace hha {

/// Symmetric block-tridiagonal matrix with T square blocks of size d.
/// `lower[t]` holds the (t+1, t) block.
struct BlockTridiagonal {
  std::vector<Mat> diag;
  std::vector<Mat> lower;

  BlockTridiagonal() = default;
  BlockTridiagonal(std::size_t steps, Eigen::Index dim);

  std::size_t steps() const { return diag.size(); }
  Eigen::Index dim() const { return diag.empty() ? 0 : diag.front().rows(); }

  /// y = J x for x stacked as T x d rows.
  Mat multiply(const Mat& x) const;
  /// Dense copy, for tests and small problems.
  Mat to_dense() const;
};

/// Forward Schur-complement factorisation of a positive definite
/// block-tridiagonal matrix. Supports solves, the log-determinant, and the
/// selected inverse (diagonal and first sub-diagonal blocks).
class BlockTridiagonalCholesky {
 public:
  /// Throws NumericalError naming the block index when a Schur complement is
  /// not positive definite.
  explicit BlockTridiagonalCholesky(const BlockTridiagonal& matrix);

  /// Solves J x = rhs, rhs stacked as T x d rows.
  Mat solve(const Mat& rhs) const;

  double log_determinant() const;

  struct Covariances {
    std::vector<Mat> diag;   ///< Cov(x_t, x_t)
    std::vector<Mat> lower;  ///< Cov(x_{t+1}, x_t)
  };
  Covariances selected_inverse() const;

 private:
  std::vector<Mat> lower_;
  std::vector<Eigen::LLT<Mat>> schur_;
};

}  // namespace hha
