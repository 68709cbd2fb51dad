#include "hha/forward_backward.hpp"
#include "hha/lqr.hpp"
#include "hha/partition.hpp"
#include "hha/planner.hpp"
#include "hha/rslds.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace hha;

namespace {

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

rslds::RsldsParams two_mode_car_model() {
  auto p = rslds::RsldsParams::identity(2, 2, 1, 1e-6);
  p.dynamics[0].A << 1.0, 1.0, 0.0, 1.0;
  p.dynamics[0].B << 0.0, 0.0015;
  p.dynamics[0].b << 0.0, -0.0025;
  p.dynamics[1].A << 1.0, 1.0, -0.005, 0.995;
  p.dynamics[1].B << 0.0, 0.0015;
  p.dynamics[1].b << 0.0, 0.001;
  p.W_x << -20.0, 0.0, 20.0, 0.0;
  p.S = 1e-10 * Mat::Identity(2, 2);
  return p;
}

}  // namespace

static void forward_backward_chain(benchmark::State& state) {
  const auto T = state.range(0);
  const int K = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  const Vec init = Vec::Constant(K, -std::log(static_cast<double>(K)));
  std::vector<Mat> trans;
  for (Eigen::Index t = 0; t + 1 < T; ++t) trans.push_back(random_matrix(K, K, rng));
  const Mat lik = random_matrix(T, K, rng, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(forward_backward(init, trans, lik));
  state.SetComplexityN(T);
}
BENCHMARK(forward_backward_chain)->Args({1000, 5})->Args({10000, 5})->Args({1000, 10})->Unit(benchmark::kMicrosecond);

static void laplace_continuous_step(benchmark::State& state) {
  const auto T = state.range(0);
  const auto params = two_mode_car_model();
  std::mt19937_64 rng(2);
  const Mat controls = random_matrix(T, 1, rng, 0.5).cwiseMax(-1.0).cwiseMin(1.0);
  Vec x0(2);
  x0 << -0.5, 0.0;
  const auto sim = rslds::simulate(params, x0, controls, rng);
  const auto qz = rslds::e_step_discrete(params, rslds::observation_posterior(sim.sequence), sim.sequence);
  for (auto _ : state) benchmark::DoNotOptimize(rslds::e_step_continuous(params, qz, sim.sequence));
}
BENCHMARK(laplace_continuous_step)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void adjacency_lp(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  partition::SoftmaxPartition p;
  p.W = random_matrix(K, 3, rng, 2.0);
  p.r = random_matrix(K, 1, rng).col(0);
  p.lower = Vec::Constant(3, -1.0);
  p.upper = Vec::Constant(3, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(partition::build_adjacency(p));
}
BENCHMARK(adjacency_lp)->Arg(5)->Arg(10)->Arg(20)->Unit(benchmark::kMicrosecond);

static void lqr_solve(benchmark::State& state) {
  const auto params = two_mode_car_model();
  lqr::LqrProblem problem;
  problem.A = params.dynamics[1].A;
  problem.B = params.dynamics[1].B;
  problem.b = params.dynamics[1].b;
  problem.x_star = Vec::Zero(2);
  problem.Q_f = 100.0 * Mat::Identity(2, 2);
  problem.R = Mat::Identity(1, 1);
  problem.horizon = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lqr::solve(problem));
}
BENCHMARK(lqr_solve)->Arg(3)->Arg(25)->Arg(200)->Unit(benchmark::kMicrosecond);

static void planner_select_action(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  planner::PlannerConfig config;
  config.horizon = static_cast<int>(state.range(1));
  partition::AdjacencyMatrix adjacency(K, false);
  for (int k = 0; k < K; ++k) {
    adjacency.set(k, k, true);
    if (k + 1 < K) adjacency.set_symmetric(k, k + 1, true);
  }
  std::mt19937_64 rng(4);
  const Mat costs = random_matrix(K, K, rng).cwiseAbs();
  const auto mdp = planner::lift(adjacency, costs, Vec::Zero(K), config);
  for (auto _ : state) benchmark::DoNotOptimize(planner::select_action(mdp, 0, config, rng));
}
BENCHMARK(planner_select_action)->Args({5, 3})->Args({8, 3})->Args({5, 5})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
