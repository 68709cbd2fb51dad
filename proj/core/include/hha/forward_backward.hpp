#pragma once

#include "hha/types.hpp"

#include <vector>

namespace hha {

/// Exact marginals of a K-state chain.
struct ChainMarginals {
  Mat unary;                   ///< T x K, rows on the simplex.
  std::vector<Mat> pairwise;   ///< T-1 blocks, pairwise[t](i, j) = q(z_t = i, z_{t+1} = j).
  double log_normalizer = 0.0;
};

/// Log-space forward-backward.
///
/// `log_transition[t](i, j)` is the log potential for z_t = i -> z_{t+1} = j
/// and `log_likelihood(t, k)` the unary log potential of z_t = k. Entries may
/// be -inf (hard evidence); NaN or +inf raise FittingError naming the step.
ChainMarginals forward_backward(const Vec& log_initial, const std::vector<Mat>& log_transition,
                                const Mat& log_likelihood);

/// log(sum(exp(v))) with max-subtraction; -inf for an all -inf input.
double log_sum_exp(const Eigen::Ref<const Vec>& v);

}  // namespace hha
