#include "hha/planner.hpp"
#include "hha_oracles/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hha;
using namespace hha::planner;

namespace {

// 0 - 1 - 2 path; 0 and 2 are not adjacent.
partition::AdjacencyMatrix path3() {
  partition::AdjacencyMatrix adj(3);
  for (int k = 0; k < 3; ++k) adj.set(k, k, true);
  adj.set_symmetric(0, 1, true);
  adj.set_symmetric(1, 2, true);
  return adj;
}

}  // namespace

TEST_CASE("lift builds masked concentrations, preferences and costs") {
  PlannerConfig cfg;
  const auto adj = path3();
  Mat costs = Mat::Constant(3, 3, 2.0);
  costs(0, 1) = 4.0;
  const Vec rewards = (Vec(3) << 0.0, 0.0, 25.0).finished();
  const auto mdp = lift(adj, costs, rewards, cfg);
  CHECK(mdp.alpha(1, 0, 1) == cfg.alpha_valid);
  CHECK(mdp.alpha(0, 0, 1) == cfg.alpha_slip);
  CHECK(mdp.alpha(2, 0, 1) == cfg.epsilon_locked);
  // Non-adjacent command from 0 behaves as hold.
  CHECK(mdp.alpha(0, 0, 2) == cfg.alpha_valid);
  CHECK(mdp.preference(2) == doctest::Approx(cfg.kappa * 25.0));
  CHECK(mdp.preference(0) == 0.0);
  CHECK(mdp.step_cost(0, 1) == doctest::Approx(1.0));
  CHECK(mdp.step_cost(1, 1) == doctest::Approx(0.5));
  CHECK(std::isinf(mdp.step_cost(0, 2)));

  const auto flat = lift(partition::AdjacencyMatrix(3, true), Mat::Ones(3, 3), Vec::Zero(3), cfg);
  CHECK(flat.preference.isZero());
  std::mt19937_64 rng(1);
  const auto policies = enumerate_policies(flat, 0, cfg, rng);
  const double first = log_policy_prior(flat, 0, policies.front(), cfg);
  for (const auto& pi : policies) CHECK(log_policy_prior(flat, 0, pi, cfg) == doctest::Approx(first));
}

TEST_CASE("Dirichlet updates add one count") {
  PlannerConfig cfg;
  DiscreteMdp mdp(partition::AdjacencyMatrix(2, true), cfg);
  CHECK(mdp.concentration(0, 0)(0) == 1.0);
  CHECK(update_dirichlet(mdp, 0, 0, 0).empty());
  CHECK(mdp.concentration(0, 0)(0) == 2.0);
  CHECK(mdp.concentration(0, 0)(1) == cfg.alpha_slip);
  for (int i = 0; i < 5; ++i) update_dirichlet(mdp, 1, 0, 1);
  CHECK(mdp.alpha(1, 1, 0) == doctest::Approx(cfg.alpha_slip + 5));
  CHECK(mdp.alpha(0, 0, 1) == cfg.alpha_slip);
}

TEST_CASE("observing a masked transition unlocks it") {
  PlannerConfig cfg;
  DiscreteMdp mdp(path3(), cfg);
  const auto diag = update_dirichlet(mdp, 0, 1, 2);
  CHECK(diag.size() == 1);
  CHECK(mdp.alpha(2, 0, 1) == doctest::Approx(1.0));
  CHECK(update_dirichlet(mdp, 0, 1, 2).empty());
  CHECK(mdp.alpha(2, 0, 1) == doctest::Approx(2.0));
}

TEST_CASE("closed-form Dirichlet KL agrees with quadrature") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 15.0);
  for (int rep = 0; rep < 10; ++rep) {
    Vec a(2), b(2);
    a << u(rng), u(rng);
    b << u(rng), u(rng);
    CHECK(dirichlet_kl(a, b) == doctest::Approx(oracle::beta_kl_quadrature(a(0), a(1), b(0), b(1))).epsilon(1e-8));
  }
  CHECK(dirichlet_kl(Vec::Ones(3), Vec::Ones(3)) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("rarely observed transitions carry more information gain") {
  PlannerConfig cfg;
  DiscreteMdp mdp(partition::AdjacencyMatrix(2, true), cfg);
  std::vector<double> counts(8, 0.0);
  mdp.set_counts(counts);
  for (int i = 0; i < 99; ++i) update_dirichlet(mdp, 0, 1, 1);
  std::mt19937_64 rng(3);
  const auto fresh = evaluate_policy(mdp, 0, {0}, 200, rng, cfg);
  const auto stale = evaluate_policy(mdp, 0, {1}, 200, rng, cfg);
  CHECK(fresh.param_info_gain > stale.param_info_gain);
  CHECK(expected_info_gain(Vec::Ones(2)) > expected_info_gain(Vec::Constant(2, 100.0)));
}

TEST_CASE("deterministic chains carry no bonus") {
  PlannerConfig cfg;
  DiscreteMdp mdp(partition::AdjacencyMatrix(2, true), cfg);
  std::vector<double> counts(8, 0.0);
  mdp.set_counts(counts);
  for (Mode s = 0; s < 2; ++s)
    for (Mode a = 0; a < 2; ++a) mdp.add_count(a, s, a, 1e9);
  std::mt19937_64 rng(4);
  const auto g = evaluate_policy(mdp, 0, {1, 0, 1}, 50, rng, cfg);
  CHECK(std::abs(g.utility) < 1e-12);
  CHECK(g.param_info_gain < 1e-8);
  CHECK(g.state_entropy < 1e-8);
  CHECK(std::abs(g.total_G) < 1e-7);
}

TEST_CASE("one-step Monte Carlo agrees with enumeration") {
  PlannerConfig cfg;
  DiscreteMdp mdp(partition::AdjacencyMatrix(2, true), cfg);
  mdp.set_counts({0, 3, 1, 0, 2, 0, 0, 5});
  mdp.preference << 0.3, -1.2;
  std::mt19937_64 rng(5);
  for (Mode a = 0; a < 2; ++a) {
    const auto mc = evaluate_policy(mdp, 1, {a}, 100000, rng, cfg);
    const auto exact = oracle::exact_efe_one_step(mdp, 1, a, true);
    CHECK(std::abs(mc.total_G - exact.total_G) <= 3 * mc.total_G_se);
    CHECK(mc.param_info_gain == doctest::Approx(exact.param_info_gain).epsilon(1e-10));
  }
}

TEST_CASE("evaluation is deterministic for a seed") {
  PlannerConfig cfg;
  DiscreteMdp mdp(path3(), cfg);
  std::mt19937_64 a(6), b(6);
  const auto x = evaluate_policy(mdp, 1, {0, 1, 2}, 64, a, cfg);
  const auto y = evaluate_policy(mdp, 1, {0, 1, 2}, 64, b, cfg);
  CHECK(x.total_G == y.total_G);
}

TEST_CASE("masked successors are essentially never sampled") {
  PlannerConfig cfg;
  DiscreteMdp mdp(path3(), cfg);
  for (Mode a = 0; a < 3; ++a) CHECK(mdp.transition(0, a)(2) <= 3 * cfg.epsilon_locked);
}

TEST_CASE("policy posterior is shift invariant and monotone") {
  const Vec G = (Vec(3) << 1.0, 2.0, 0.5).finished();
  const Vec E = Vec::Zero(3);
  const Vec p = policy_posterior(G, E);
  CHECK((policy_posterior(G.array() + 7.0, E) - p).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(p(2) > p(0));
  CHECK(p(0) > p(1));
  CHECK(p.sum() == doctest::Approx(1.0));
}

TEST_CASE("a single admissible policy is always chosen") {
  PlannerConfig cfg;
  cfg.horizon = 1;
  partition::AdjacencyMatrix adj(2);
  adj.set(0, 0, true);
  adj.set(1, 1, true);
  DiscreteMdp mdp(adj, cfg);
  std::mt19937_64 rng(7);
  const auto d = select_action(mdp, 0, cfg, rng);
  CHECK(d.action == 0);
  CHECK(d.policies_evaluated == 1);
  CHECK(d.probability == doctest::Approx(1.0));
}

TEST_CASE("reward in an adjacent mode attracts the planner") {
  PlannerConfig cfg;
  cfg.horizon = 1;
  cfg.info_gain = false;
  auto mdp = lift(path3(), Mat::Ones(3, 3), (Vec(3) << 0.0, 0.0, 1.0).finished(), cfg);
  std::mt19937_64 rng(8);
  const auto d = select_action(mdp, 1, cfg, rng);
  Eigen::Index best;
  d.action_marginal.maxCoeff(&best);
  CHECK(best == 2);
}

TEST_CASE("a symmetric cycle gives a uniform action marginal") {
  PlannerConfig cfg;
  cfg.horizon = 2;
  cfg.n_samples = 4000;
  DiscreteMdp mdp(partition::AdjacencyMatrix(3, true), cfg);
  std::mt19937_64 rng(9);
  const auto d = select_action(mdp, 0, cfg, rng);
  CHECK((d.action_marginal.array() - 1.0 / 3.0).abs().maxCoeff() < 0.02);
}

TEST_CASE("policy enumeration respects the cap and feasibility") {
  PlannerConfig cfg;
  cfg.horizon = 3;
  DiscreteMdp mdp(path3(), cfg);
  std::mt19937_64 rng(10);
  const auto all = enumerate_policies(mdp, 0, cfg, rng);
  CHECK(all.size() == 2 * 9);
  for (const auto& pi : all) CHECK(mdp.feasible(0, pi.front()));
  cfg.policy_cap = 5;
  CHECK(enumerate_policies(mdp, 0, cfg, rng).size() == 5);
}

TEST_CASE("state read-off") {
  CHECK(infer_discrete_state((Vec(3) << 0, 1, 0).finished()) == 1);
  CHECK(infer_discrete_state(Vec::Constant(4, 0.25)) == 0);
  CHECK(infer_discrete_state((Vec(3) << 0.2, 0.5, 0.3).finished()) == 1);
}

TEST_CASE("counts follow relabelled modes") {
  PlannerConfig cfg;
  DiscreteMdp mdp(partition::AdjacencyMatrix(2, true), cfg);
  update_dirichlet(mdp, 0, 0, 1);
  update_dirichlet(mdp, 0, 0, 1);
  const auto moved = remap_counts(mdp.counts(), 2, {1, 0}, 3);
  DiscreteMdp next(partition::AdjacencyMatrix(3, true), cfg);
  next.set_counts(moved);
  CHECK(next.count(0, 1, 1) == 2.0);
  CHECK(next.count(1, 0, 0) == 0.0);
  const auto dropped = remap_counts(mdp.counts(), 2, {-1, 0}, 2);
  for (double c : dropped) CHECK(c == 0.0);
}
