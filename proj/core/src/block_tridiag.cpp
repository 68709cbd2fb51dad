#include "hha/block_tridiag.hpp"

#include <string>

namespace hha {

BlockTridiagonal::BlockTridiagonal(std::size_t steps, Eigen::Index dim)
    : diag(steps, Mat::Zero(dim, dim)), lower(steps > 0 ? steps - 1 : 0, Mat::Zero(dim, dim)) {}

Mat BlockTridiagonal::multiply(const Mat& x) const {
  const auto T = static_cast<Eigen::Index>(steps());
  Mat y(T, dim());
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    Vec acc = diag[ts] * x.row(t).transpose();
    if (t > 0) acc += lower[ts - 1] * x.row(t - 1).transpose();
    if (t + 1 < T) acc += lower[ts].transpose() * x.row(t + 1).transpose();
    y.row(t) = acc.transpose();
  }
  return y;
}

Mat BlockTridiagonal::to_dense() const {
  const auto T = static_cast<Eigen::Index>(steps());
  const auto d = dim();
  Mat dense = Mat::Zero(T * d, T * d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    dense.block(t * d, t * d, d, d) = diag[ts];
    if (t + 1 < T) {
      dense.block((t + 1) * d, t * d, d, d) = lower[ts];
      dense.block(t * d, (t + 1) * d, d, d) = lower[ts].transpose();
    }
  }
  return dense;
}

BlockTridiagonalCholesky::BlockTridiagonalCholesky(const BlockTridiagonal& matrix)
    : lower_(matrix.lower) {
  const auto T = matrix.steps();
  require(T >= 1, "block-tridiagonal factorisation of an empty matrix");
  schur_.reserve(T);
  Mat schur = matrix.diag[0];
  for (std::size_t t = 0;; ++t) {
    Eigen::LLT<Mat> llt(schur);
    if (llt.info() != Eigen::Success)
      throw NumericalError("block-tridiagonal matrix not positive definite at block " + std::to_string(t));
    schur_.push_back(std::move(llt));
    if (t + 1 == T) break;
    const Mat& off = matrix.lower[t];
    schur = matrix.diag[t + 1] - off * schur_.back().solve(off.transpose());
  }
}

Mat BlockTridiagonalCholesky::solve(const Mat& rhs) const {
  const auto T = static_cast<Eigen::Index>(schur_.size());
  require(rhs.rows() == T, "block-tridiagonal solve: rhs has wrong number of steps");
  Mat h = rhs;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    h.row(t + 1) -= (lower_[ts] * schur_[ts].solve(h.row(t).transpose())).transpose();
  }
  Mat x(rhs.rows(), rhs.cols());
  x.row(T - 1) = schur_.back().solve(h.row(T - 1).transpose()).transpose();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    Vec r = h.row(t).transpose() - lower_[ts].transpose() * x.row(t + 1).transpose();
    x.row(t) = schur_[ts].solve(r).transpose();
  }
  return x;
}

double BlockTridiagonalCholesky::log_determinant() const {
  double total = 0.0;
  for (const auto& llt : schur_) total += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return total;
}

BlockTridiagonalCholesky::Covariances BlockTridiagonalCholesky::selected_inverse() const {
  const auto T = schur_.size();
  const auto d = schur_.front().rows();
  Covariances cov;
  cov.diag.resize(T);
  cov.lower.resize(T - 1);
  const Mat eye = Mat::Identity(d, d);
  cov.diag[T - 1] = schur_[T - 1].solve(eye);
  for (std::size_t t = T - 1; t-- > 0;) {
    // x_t | x_{t+1} has precision Lambda_t and mean G x_{t+1}, G = -Lambda_t^{-1} O_t^T.
    const Mat lambda_inv = schur_[t].solve(eye);
    const Mat gain = -schur_[t].solve(lower_[t].transpose());
    cov.lower[t] = cov.diag[t + 1] * gain.transpose();
    Mat sigma = lambda_inv + gain * cov.diag[t + 1] * gain.transpose();
    cov.diag[t] = 0.5 * (sigma + sigma.transpose());
  }
  return cov;
}

}  // namespace hha
