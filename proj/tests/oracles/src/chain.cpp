#include "hha_oracles/oracles.hpp"

#include <cmath>
#include <limits>

namespace hha::oracle {

ChainMarginals enumerate_chain(const Vec& log_initial, const std::vector<Mat>& log_transition,
                               const Mat& log_likelihood) {
  const auto T = static_cast<int>(log_likelihood.rows());
  const auto K = static_cast<int>(log_likelihood.cols());
  long paths = 1;
  for (int t = 0; t < T; ++t) paths *= K;

  std::vector<double> log_weight(static_cast<std::size_t>(paths));
  std::vector<int> z(static_cast<std::size_t>(T));
  double max_w = -std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < paths; ++idx) {
    long rest = idx;
    for (int t = 0; t < T; ++t) {
      z[t] = static_cast<int>(rest % K);
      rest /= K;
    }
    double w = log_initial(z[0]) + log_likelihood(0, z[0]);
    for (int t = 1; t < T; ++t) w += log_transition[t - 1](z[t - 1], z[t]) + log_likelihood(t, z[t]);
    log_weight[idx] = w;
    max_w = std::max(max_w, w);
  }

  ChainMarginals out;
  out.unary = Mat::Zero(T, K);
  out.pairwise.assign(static_cast<std::size_t>(std::max(T - 1, 0)), Mat::Zero(K, K));
  double total = 0.0;
  for (long idx = 0; idx < paths; ++idx) {
    const double w = std::isinf(log_weight[idx]) ? 0.0 : std::exp(log_weight[idx] - max_w);
    total += w;
    long rest = idx;
    for (int t = 0; t < T; ++t) {
      z[t] = static_cast<int>(rest % K);
      rest /= K;
    }
    for (int t = 0; t < T; ++t) out.unary(t, z[t]) += w;
    for (int t = 0; t + 1 < T; ++t) out.pairwise[t](z[t], z[t + 1]) += w;
  }
  out.unary /= total;
  for (auto& m : out.pairwise) m /= total;
  out.log_normalizer = max_w + std::log(total);
  return out;
}

}  // namespace hha::oracle
