#pragma once

#include "hha/partition.hpp"
#include "hha/priors.hpp"
#include "hha/rslds.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hha::lqr {

/// Drive x_{t+1} = A x + B u + b to x_star with terminal cost Q_f and
/// per-step control cost R over `horizon` steps.
struct LqrProblem {
  Mat A;
  Mat B;
  Vec b;
  Vec x_star;
  Mat Q_f;
  Mat R;
  /// Optional per-step cost on x - x_star; empty means zero.
  Mat Q;
  int horizon = 1;

  void validate() const;
};

/// Time-varying affine feedback u_t = K_t (x - x_star) + k_t. Value matrices
/// act on the augmented state z = [x - x_star; 1].
struct LqrSolution {
  std::vector<Mat> gains;        ///< N x M, t = 0..S-1
  std::vector<Vec> offsets;      ///< N, t = 0..S-1
  std::vector<Mat> cost_to_go;   ///< (M+1) x (M+1), t = 0..S
  std::vector<Mat> control_cov;  ///< (R + B^T S_{t+1} B)^{-1}
  double log_det_precision_sum = 0.0;
  double expected_cost = 0.0;
  Vec x_star;

  int horizon() const { return static_cast<int>(gains.size()); }
  /// Unclamped control at horizon step min(step, S-1).
  Vec control(const Vec& x, int step) const;
  /// z^T S_0 z.
  double cost_from(const Vec& x) const;
};

LqrSolution solve(const LqrProblem& problem);

/// Mean of z^T S_0 z over the rows of `states`.
double estimate_average_cost(const LqrSolution& solution, const Mat& states);

struct LqrConfig {
  int horizon = 25;
  double q_f = 100.0;
  double r = 10.0;
  /// Sample states per region used for the average cost.
  int max_cost_samples = 200;
};

struct CacheEntry {
  LqrSolution solution;
  double average_cost = 0.0;
};

using PairKey = std::pair<Mode, Mode>;

struct LqrCache {
  std::map<PairKey, CacheEntry> entries;
  std::vector<std::string> diagnostics;

  const CacheEntry* find(Mode i, Mode j) const;
  /// Average costs as a K x K matrix, +inf where no entry exists.
  Mat cost_matrix(int K) const;
  nlohmann::json to_json() const;
};

/// Solves every adjacent (i, j) pair, self-pairs included, with mode-i
/// dynamics and the region-j target. `region_states[i]` holds states
/// labelled i (rows); when empty the region-i target plus axis offsets of
/// one prior standard deviation is used.
LqrCache rebuild_cache(const rslds::RsldsParams& params, const partition::AdjacencyMatrix& adjacency,
                       const std::vector<std::optional<priors::ControlPrior>>& priors,
                       const std::vector<Mat>& region_states, const LqrConfig& config = {});

}  // namespace hha::lqr
