#include "hha_oracles/oracles.hpp"

#include <algorithm>

namespace hha::oracle {

SyntheticSystem two_mode_system() {
  SyntheticSystem sys;
  auto& p = sys.params;
  p = rslds::RsldsParams::identity(2, 1, 1, 1e-3);
  p.dynamics[0].A(0, 0) = 0.95;
  p.dynamics[0].B(0, 0) = 0.5;
  p.dynamics[0].b(0) = 0.3;
  p.dynamics[1].A(0, 0) = 0.8;
  p.dynamics[1].B(0, 0) = 0.2;
  p.dynamics[1].b(0) = -0.3;
  p.W_x << -10.0, 10.0;
  p.W_u.setZero();
  p.r.setZero();
  p.S = 1e-4 * Mat::Identity(1, 1);
  sys.control_sd = 0.3;
  return sys;
}

RecoveryReport fit_and_score(const SyntheticSystem& system, int T, int em_iters, std::uint64_t seed) {
  const auto& truth = system.params;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, system.control_sd);
  Mat controls(T, truth.N);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < truth.N; ++n) controls(t, n) = noise(rng);
  const auto sim = rslds::simulate(truth, Vec::Zero(truth.M), controls, rng);

  rslds::TrajectoryBatch batch;
  batch.sequences.push_back(sim.sequence);
  std::mt19937_64 init_rng(seed + 1);
  const auto init = rslds::initialize(batch, truth.K, truth.M, truth.N, init_rng);
  rslds::FitConfig config;
  config.em_iters = em_iters;
  const auto fitted = rslds::fit(init.params, rslds::MniwPrior::weakly_informative(truth.M, truth.N), batch, config);

  RecoveryReport report;
  report.em_iters = em_iters;
  report.elbo_trace = fitted.elbo_trace;
  const auto z = rslds::map_modes(fitted.posterior.q_z[0]);

  std::vector<Mode> perm(static_cast<std::size_t>(truth.K));
  for (int k = 0; k < truth.K; ++k) perm[k] = k;
  double best_acc = -1.0;
  std::vector<Mode> best_perm;
  do {
    int agree = 0;
    for (int t = 0; t < T; ++t) agree += perm[z[t]] == sim.z[t];
    const double acc = static_cast<double>(agree) / T;
    if (acc > best_acc) {
      best_acc = acc;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  report.accuracy = best_acc;
  report.permutation = best_perm;
  for (int k = 0; k < truth.K; ++k) {
    const double err = (fitted.params.stacked_dynamics(k) - truth.stacked_dynamics(best_perm[k])).norm();
    report.dynamics_error = std::max(report.dynamics_error, err);
  }
  return report;
}

}  // namespace hha::oracle
