#pragma once

#include "hha/partition.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>
#include <vector>

/// Discrete active-inference planner over modes. Action j means "drive
/// toward region j"; observations are the modes themselves.
namespace hha::planner {

struct PlannerConfig {
  int horizon = 3;
  int policy_cap = 4096;
  int n_samples = 64;
  double alpha_valid = 1.0;
  double alpha_slip = 0.5;
  double epsilon_locked = 1e-10;
  double kappa = 4.0;
  double beta = 0.1;
  /// Parameter information gain and state entropy terms.
  bool info_gain = true;
  /// Normalised cost charged for a step whose command has no controller.
  double infeasible_cost = 2.0;
};

/// Concentration tensor alpha[s', s, a] split into the structural prior and
/// observed counts so the counts can be carried across refits.
class DiscreteMdp {
 public:
  DiscreteMdp() = default;
  DiscreteMdp(partition::AdjacencyMatrix adjacency, const PlannerConfig& config);

  int states() const { return K_; }
  const partition::AdjacencyMatrix& adjacency() const { return adjacency_; }

  double alpha(Mode next, Mode s, Mode a) const { return base_[index(next, s, a)] + counts_[index(next, s, a)]; }
  double base(Mode next, Mode s, Mode a) const { return base_[index(next, s, a)]; }
  double count(Mode next, Mode s, Mode a) const { return counts_[index(next, s, a)]; }
  /// Concentration vector over successors of (s, a).
  Vec concentration(Mode s, Mode a) const;
  /// Posterior-mean successor distribution alpha / sum(alpha).
  Vec transition(Mode s, Mode a) const;

  /// Whether action a has a controller from s (adjacent target).
  bool feasible(Mode s, Mode a) const { return adjacency_(s, a); }

  const std::vector<double>& counts() const { return counts_; }
  void set_counts(std::vector<double> counts);
  void add_count(Mode next, Mode s, Mode a, double amount);
  /// Marks an entry as observed, raising its base above the lock level.
  void unlock(Mode next, Mode s, Mode a, double value);

  Vec preference;   ///< log-preference per mode
  Mat step_cost;    ///< normalised J*(s, a); +inf where infeasible

  nlohmann::json to_json() const;

 private:
  std::size_t index(Mode next, Mode s, Mode a) const;

  int K_ = 0;
  partition::AdjacencyMatrix adjacency_;
  std::vector<double> base_;
  std::vector<double> counts_;
  double epsilon_locked_ = 0.0;
};

/// Costs are divided by the largest finite entry so that beta is unitless.
DiscreteMdp lift(const partition::AdjacencyMatrix& adjacency, const Mat& average_costs, const Vec& reward_per_mode,
                 const PlannerConfig& config = {});

/// Adds one observation. Returns a diagnostic when the transition had been
/// locked by the adjacency mask (it is unlocked).
std::vector<std::string> update_dirichlet(DiscreteMdp& mdp, Mode s, Mode a, Mode next);

/// KL(Dir(a) || Dir(b)).
double dirichlet_kl(const Vec& a, const Vec& b);

/// E_{s' ~ alpha/alpha0} KL(Dir(alpha + e_{s'}) || Dir(alpha)).
double expected_info_gain(const Vec& alpha);

using DiscretePolicy = std::vector<Mode>;

struct EfeBreakdown {
  double utility = 0.0;
  double param_info_gain = 0.0;
  double state_entropy = 0.0;
  double total_G = 0.0;
  /// Sample standard errors of each estimate.
  double utility_se = 0.0;
  double param_info_gain_se = 0.0;
  double state_entropy_se = 0.0;
  double total_G_se = 0.0;
};

/// Monte Carlo expected free energy with hypothetical count updates along
/// each rollout.
EfeBreakdown evaluate_policy(const DiscreteMdp& mdp, Mode s0, const DiscretePolicy& policy, int n_samples,
                             std::mt19937_64& rng, const PlannerConfig& config = {});

/// ln E(pi) = -beta * sum of normalised step costs along the commanded path.
double log_policy_prior(const DiscreteMdp& mdp, Mode s0, const DiscretePolicy& policy,
                        const PlannerConfig& config = {});

/// All K^H policies whose first action is feasible from s0, or a uniform
/// sample of policy_cap of them when that set is larger.
std::vector<DiscretePolicy> enumerate_policies(const DiscreteMdp& mdp, Mode s0, const PlannerConfig& config,
                                               std::mt19937_64& rng);

/// softmax(-G + ln E).
Vec policy_posterior(const Vec& G, const Vec& log_prior);

struct Decision {
  Mode action = 0;
  DiscretePolicy policy;
  double probability = 0.0;
  EfeBreakdown breakdown;
  double log_prior = 0.0;
  int policies_evaluated = 0;
  /// Marginal selection probability of each first action.
  Vec action_marginal;

  nlohmann::json to_json() const;
};

/// Samples pi ~ softmax(-G + ln E) and returns its first action.
Decision select_action(const DiscreteMdp& mdp, Mode s0, const PlannerConfig& config, std::mt19937_64& rng);

/// Argmax with ties resolved toward the lowest index.
Mode infer_discrete_state(const Vec& q);

/// Carries counts to relabelled modes: new index = mapping[old], -1 drops.
std::vector<double> remap_counts(const std::vector<double>& counts, int K_old, const std::vector<Mode>& mapping,
                                 int K_new);

}  // namespace hha::planner
