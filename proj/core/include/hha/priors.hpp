#pragma once

#include "hha/partition.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace hha::priors {

struct PriorConfig {
  double threshold = 0.7;
  double step_size = 0.1;
  int max_iters = 5000;
  double sigma_sq = 1e-2;
};

/// Target point deep inside one region of the partition.
struct ControlPrior {
  Mode region = 0;
  Vec target_x;   ///< M
  Vec target_u;   ///< N
  double achieved_prob = 0.0;
  Mat sigma;      ///< M x M
  int iterations = 0;
  bool below_threshold = false;

  nlohmann::json to_json() const;
};

/// d softmax_j / dv = p_j (e_j - p)^T W, as a D vector.
Vec probability_gradient(const partition::SoftmaxPartition& partition, Mode j, const Vec& v);

/// Projected gradient ascent on softmax_j from `start` (M+N vector).
ControlPrior find_region_target(const partition::SoftmaxPartition& partition, Mode j, const Vec& start, int M,
                                const PriorConfig& config = {});

/// Starting point for region j: mean of the labelled points (rows of
/// `points`) if any carry label j, else the box center. Result is clamped.
Vec default_start(const partition::SoftmaxPartition& partition, Mode j, const Mat& points,
                  const std::vector<Mode>& labels);

/// One prior per non-empty region; empty regions map to nullopt.
std::vector<std::optional<ControlPrior>> compute_priors(const partition::SoftmaxPartition& partition,
                                                        const std::vector<Mode>& empty_regions, const Mat& points,
                                                        const std::vector<Mode>& labels, int M,
                                                        const PriorConfig& config = {});

}  // namespace hha::priors
