#include "hha/priors.hpp"

#include "hha/json_io.hpp"

#include <algorithm>

namespace hha::priors {

nlohmann::json ControlPrior::to_json() const {
  return {{"region", region},
          {"target_x", io::vector_to_json(target_x)},
          {"target_u", io::vector_to_json(target_u)},
          {"achieved_prob", achieved_prob},
          {"iterations", iterations},
          {"below_threshold", below_threshold}};
}

Vec probability_gradient(const partition::SoftmaxPartition& partition, Mode j, const Vec& v) {
  const Vec p = partition.probabilities(v);
  Vec e = -p;
  e(j) += 1.0;
  return p(j) * (partition.W.transpose() * e);
}

namespace {

Vec clamp_to_box(const partition::SoftmaxPartition& partition, Vec v) {
  return v.cwiseMax(partition.lower).cwiseMin(partition.upper);
}

}  // namespace

ControlPrior find_region_target(const partition::SoftmaxPartition& partition, Mode j, const Vec& start, int M,
                                const PriorConfig& config) {
  require(j >= 0 && j < partition.regions(), "find_region_target: region out of range");
  require(start.size() == partition.dim() && M >= 1 && M <= partition.dim(), "find_region_target: start shape");
  require(config.step_size > 0.0 && config.max_iters >= 0 && config.sigma_sq > 0.0,
          "find_region_target: invalid config");

  Vec v = clamp_to_box(partition, start);
  double prob = partition.probabilities(v)(j);
  Vec best = v;
  double best_prob = prob;
  int iters = 0;
  while (prob < config.threshold && iters < config.max_iters) {
    v = clamp_to_box(partition, v + config.step_size * probability_gradient(partition, j, v));
    prob = partition.probabilities(v)(j);
    ++iters;
    if (prob > best_prob) {
      best_prob = prob;
      best = v;
    }
  }

  ControlPrior prior;
  prior.region = j;
  prior.target_x = best.head(M);
  prior.target_u = best.tail(partition.dim() - M);
  prior.achieved_prob = best_prob;
  prior.sigma = config.sigma_sq * Mat::Identity(M, M);
  prior.iterations = iters;
  prior.below_threshold = best_prob < config.threshold;
  return prior;
}

Vec default_start(const partition::SoftmaxPartition& partition, Mode j, const Mat& points,
                  const std::vector<Mode>& labels) {
  require(static_cast<std::size_t>(points.rows()) == labels.size(), "default_start: label count");
  Vec sum = Vec::Zero(partition.dim());
  int count = 0;
  for (std::size_t t = 0; t < labels.size(); ++t)
    if (labels[t] == j) {
      sum += points.row(static_cast<Eigen::Index>(t)).transpose();
      ++count;
    }
  if (count == 0) return 0.5 * (partition.lower + partition.upper);
  return clamp_to_box(partition, sum / count);
}

std::vector<std::optional<ControlPrior>> compute_priors(const partition::SoftmaxPartition& partition,
                                                        const std::vector<Mode>& empty_regions, const Mat& points,
                                                        const std::vector<Mode>& labels, int M,
                                                        const PriorConfig& config) {
  std::vector<std::optional<ControlPrior>> out(static_cast<std::size_t>(partition.regions()));
  for (Mode j = 0; j < partition.regions(); ++j) {
    if (std::find(empty_regions.begin(), empty_regions.end(), j) != empty_regions.end()) continue;
    out[static_cast<std::size_t>(j)] = find_region_target(partition, j, default_start(partition, j, points, labels), M, config);
  }
  return out;
}

}  // namespace hha::priors
