#include "hha/lqr.hpp"

#include "hha/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hha::lqr {

void LqrProblem::validate() const {
  const auto M = A.rows();
  require(A.cols() == M && B.rows() == M && b.size() == M && x_star.size() == M, "lqr: dynamics shape");
  require(Q_f.rows() == M && Q_f.cols() == M, "lqr: Q_f shape");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "lqr: R shape");
  require(horizon >= 1, "lqr: horizon must be >= 1");
  require(Q.size() == 0 || (Q.rows() == M && Q.cols() == M), "lqr: Q shape");
  require(Q_f.isApprox(Q_f.transpose(), 1e-12) && R.isApprox(R.transpose(), 1e-12), "lqr: costs must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> qf(Q_f, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Mat> rr(R, Eigen::EigenvaluesOnly);
  if (Q.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> qq(0.5 * (Q + Q.transpose()), Eigen::EigenvaluesOnly);
    require(qq.eigenvalues().minCoeff() >= -1e-12, "lqr: Q must be PSD");
  }
  require(qf.eigenvalues().minCoeff() >= -1e-12, "lqr: Q_f must be PSD");
  require(rr.eigenvalues().minCoeff() > 0.0, "lqr: R must be PD");
}

Vec LqrSolution::control(const Vec& x, int step) const {
  require(!gains.empty(), "lqr: empty solution");
  const auto t = static_cast<std::size_t>(std::clamp(step, 0, horizon() - 1));
  return gains[t] * (x - x_star) + offsets[t];
}

double LqrSolution::cost_from(const Vec& x) const {
  const auto M = x_star.size();
  Vec z(M + 1);
  z << x - x_star, 1.0;
  return z.dot(cost_to_go.front() * z);
}

LqrSolution solve(const LqrProblem& p) {
  p.validate();
  const auto M = p.A.rows();
  const auto N = p.B.cols();
  Mat A_aug = Mat::Zero(M + 1, M + 1);
  A_aug.topLeftCorner(M, M) = p.A;
  A_aug.topRightCorner(M, 1) = p.A * p.x_star + p.b - p.x_star;
  A_aug(M, M) = 1.0;
  Mat B_aug = Mat::Zero(M + 1, N);
  B_aug.topRows(M) = p.B;

  LqrSolution sol;
  sol.x_star = p.x_star;
  const auto S = static_cast<std::size_t>(p.horizon);
  sol.gains.resize(S);
  sol.offsets.resize(S);
  sol.control_cov.resize(S);
  sol.cost_to_go.resize(S + 1);
  Mat running = Mat::Zero(M + 1, M + 1);
  if (p.Q.size() > 0) running.topLeftCorner(M, M) = 0.5 * (p.Q + p.Q.transpose());
  Mat V = Mat::Zero(M + 1, M + 1);
  V.topLeftCorner(M, M) = p.Q_f;
  sol.cost_to_go[S] = V;
  for (std::size_t k = S; k-- > 0;) {
    const Mat H = p.R + B_aug.transpose() * V * B_aug;
    Eigen::LLT<Mat> llt(0.5 * (H + H.transpose()));
    if (llt.info() != Eigen::Success)
      throw NumericalError("lqr: control Hessian not positive definite at step " + std::to_string(k));
    const Mat K = -llt.solve(B_aug.transpose() * V * A_aug);
    const Mat closed = A_aug + B_aug * K;
    V = running + K.transpose() * p.R * K + closed.transpose() * V * closed;
    V = 0.5 * (V + V.transpose());
    if (!V.allFinite()) throw NumericalError("lqr: non-finite value matrix at step " + std::to_string(k));
    sol.gains[k] = K.leftCols(M);
    sol.offsets[k] = K.col(M);
    sol.cost_to_go[k] = V;
    sol.control_cov[k] = llt.solve(Mat::Identity(N, N));
    sol.log_det_precision_sum += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  Vec z0(M + 1);
  z0.setZero();
  z0(M) = 1.0;
  sol.expected_cost = z0.dot(sol.cost_to_go.front() * z0);
  return sol;
}

double estimate_average_cost(const LqrSolution& solution, const Mat& states) {
  require(states.rows() >= 1, "estimate_average_cost: empty sample");
  require(states.cols() == solution.x_star.size(), "estimate_average_cost: state dimension");
  double total = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) total += solution.cost_from(states.row(i).transpose());
  return total / static_cast<double>(states.rows());
}

const CacheEntry* LqrCache::find(Mode i, Mode j) const {
  const auto it = entries.find({i, j});
  return it == entries.end() ? nullptr : &it->second;
}

Mat LqrCache::cost_matrix(int K) const {
  Mat C = Mat::Constant(K, K, std::numeric_limits<double>::infinity());
  for (const auto& [key, entry] : entries) C(key.first, key.second) = entry.average_cost;
  return C;
}

nlohmann::json LqrCache::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [key, entry] : entries) {
    pairs.push_back({{"from", key.first},
                     {"to", key.second},
                     {"average_cost", entry.average_cost},
                     {"x_star", io::vector_to_json(entry.solution.x_star)},
                     {"gain_0", io::matrix_to_json(entry.solution.gains.front())},
                     {"offset_0", io::vector_to_json(entry.solution.offsets.front())},
                     {"log_det_precision_sum", entry.solution.log_det_precision_sum}});
  }
  return {{"pairs", pairs}, {"diagnostics", diagnostics}};
}

namespace {

Mat thin_rows(const Mat& states, int max_rows) {
  if (states.rows() <= max_rows) return states;
  Mat out(max_rows, states.cols());
  const double stride = static_cast<double>(states.rows()) / max_rows;
  for (int i = 0; i < max_rows; ++i) out.row(i) = states.row(static_cast<Eigen::Index>(i * stride));
  return out;
}

Mat fallback_states(const priors::ControlPrior& prior) {
  const auto M = prior.target_x.size();
  const double sd = std::sqrt(prior.sigma(0, 0));
  Mat out(2 * M + 1, M);
  out.row(0) = prior.target_x.transpose();
  for (Eigen::Index d = 0; d < M; ++d) {
    out.row(1 + 2 * d) = prior.target_x.transpose();
    out(1 + 2 * d, d) += sd;
    out.row(2 + 2 * d) = prior.target_x.transpose();
    out(2 + 2 * d, d) -= sd;
  }
  return out;
}

}  // namespace

LqrCache rebuild_cache(const rslds::RsldsParams& params, const partition::AdjacencyMatrix& adjacency,
                       const std::vector<std::optional<priors::ControlPrior>>& priors,
                       const std::vector<Mat>& region_states, const LqrConfig& config) {
  require(adjacency.size() == params.K, "rebuild_cache: adjacency size");
  require(static_cast<int>(priors.size()) == params.K && static_cast<int>(region_states.size()) == params.K,
          "rebuild_cache: per-region input size");
  require(config.horizon >= 1 && config.q_f >= 0.0 && config.r > 0.0, "rebuild_cache: invalid config");
  LqrCache cache;
  for (Mode i = 0; i < params.K; ++i) {
    const auto& own = priors[static_cast<std::size_t>(i)];
    const Mat& labelled = region_states[static_cast<std::size_t>(i)];
    for (Mode j = 0; j < params.K; ++j) {
      if (!adjacency(i, j)) continue;
      const auto& target = priors[static_cast<std::size_t>(j)];
      if (!target) {
        cache.diagnostics.push_back("no prior for region " + std::to_string(j) + "; pair (" + std::to_string(i) +
                                    ", " + std::to_string(j) + ") skipped");
        continue;
      }
      Mat samples;
      if (labelled.rows() > 0) samples = thin_rows(labelled, config.max_cost_samples);
      else if (own) samples = fallback_states(*own);
      else samples = fallback_states(*target);

      LqrProblem problem;
      const auto& dyn = params.dynamics[static_cast<std::size_t>(i)];
      problem.A = dyn.A;
      problem.B = dyn.B;
      problem.b = dyn.b;
      problem.x_star = target->target_x;
      problem.Q_f = config.q_f * target->sigma.inverse();
      problem.Q_f = 0.5 * (problem.Q_f + problem.Q_f.transpose());
      problem.R = config.r * Mat::Identity(params.N, params.N);
      problem.horizon = config.horizon;

      CacheEntry entry;
      entry.solution = solve(problem);
      entry.average_cost = estimate_average_cost(entry.solution, samples);
      cache.entries.emplace(PairKey{i, j}, std::move(entry));
    }
  }
  return cache;
}

}  // namespace hha::lqr
