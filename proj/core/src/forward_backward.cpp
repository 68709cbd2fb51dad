#include "hha/forward_backward.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hha {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool admissible(double v) { return !std::isnan(v) && v != std::numeric_limits<double>::infinity(); }

void check_potentials(const Vec& log_initial, const std::vector<Mat>& log_transition,
                      const Mat& log_likelihood) {
  const auto T = log_likelihood.rows();
  const auto K = log_likelihood.cols();
  require(T >= 1 && K >= 1, "forward_backward: empty potentials");
  require(log_initial.size() == K, "forward_backward: initial size mismatch");
  require(static_cast<Eigen::Index>(log_transition.size()) == T - 1,
          "forward_backward: expected T-1 transition blocks");
  for (Eigen::Index k = 0; k < K; ++k)
    if (!admissible(log_initial(k))) throw FittingError("forward_backward: non-finite initial potential");
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k)
      if (!admissible(log_likelihood(t, k)))
        throw FittingError("forward_backward: non-finite emission potential at t=" + std::to_string(t));
    if (t + 1 < T) {
      const Mat& lt = log_transition[static_cast<std::size_t>(t)];
      require(lt.rows() == K && lt.cols() == K, "forward_backward: transition block shape");
      for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j)
          if (!admissible(lt(i, j)))
            throw FittingError("forward_backward: non-finite transition potential at t=" +
                               std::to_string(t));
    }
  }
}

}  // namespace

double log_sum_exp(const Eigen::Ref<const Vec>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

ChainMarginals forward_backward(const Vec& log_initial, const std::vector<Mat>& log_transition,
                                const Mat& log_likelihood) {
  check_potentials(log_initial, log_transition, log_likelihood);
  const auto T = log_likelihood.rows();
  const auto K = log_likelihood.cols();

  Mat alpha(T, K);
  Mat beta(T, K);
  alpha.row(0) = (log_initial + log_likelihood.row(0).transpose()).transpose();
  Vec scratch(K);
  for (Eigen::Index t = 1; t < T; ++t) {
    const Mat& lt = log_transition[static_cast<std::size_t>(t - 1)];
    for (Eigen::Index j = 0; j < K; ++j) {
      scratch = alpha.row(t - 1).transpose() + lt.col(j);
      alpha(t, j) = log_sum_exp(scratch) + log_likelihood(t, j);
    }
  }
  beta.row(T - 1).setZero();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Mat& lt = log_transition[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < K; ++i) {
      scratch = lt.row(i).transpose() + log_likelihood.row(t + 1).transpose() + beta.row(t + 1).transpose();
      beta(t, i) = log_sum_exp(scratch);
    }
  }

  ChainMarginals out;
  out.log_normalizer = log_sum_exp(alpha.row(T - 1).transpose());
  if (!std::isfinite(out.log_normalizer))
    throw FittingError("forward_backward: evidence has zero probability");

  out.unary.resize(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    Vec row = (alpha.row(t) + beta.row(t)).transpose();
    const double z = log_sum_exp(row);
    if (!std::isfinite(z)) throw FittingError("forward_backward: degenerate marginal at t=" + std::to_string(t));
    out.unary.row(t) = (row.array() - z).exp().transpose();
  }

  out.pairwise.resize(static_cast<std::size_t>(T > 0 ? T - 1 : 0));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Mat& lt = log_transition[static_cast<std::size_t>(t)];
    Mat joint(K, K);
    for (Eigen::Index i = 0; i < K; ++i)
      for (Eigen::Index j = 0; j < K; ++j)
        joint(i, j) = alpha(t, i) + lt(i, j) + log_likelihood(t + 1, j) + beta(t + 1, j);
    const double m = joint.maxCoeff();
    Mat p = (joint.array() - m).exp().matrix();
    p /= p.sum();
    out.pairwise[static_cast<std::size_t>(t)] = std::move(p);
  }
  return out;
}

}  // namespace hha
