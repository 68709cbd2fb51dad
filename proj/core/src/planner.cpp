#include "hha/planner.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace hha::planner {

DiscreteMdp::DiscreteMdp(partition::AdjacencyMatrix adjacency, const PlannerConfig& config)
    : K_(adjacency.size()), adjacency_(std::move(adjacency)), epsilon_locked_(config.epsilon_locked) {
  require(K_ >= 1, "DiscreteMdp: need at least one state");
  require(config.alpha_valid > 0.0 && config.alpha_slip > 0.0 && config.epsilon_locked > 0.0,
          "DiscreteMdp: concentrations must be positive");
  const auto n = static_cast<std::size_t>(K_) * K_ * K_;
  base_.assign(n, config.epsilon_locked);
  counts_.assign(n, 0.0);
  preference = Vec::Zero(K_);
  step_cost = Mat::Zero(K_, K_);
  for (Mode s = 0; s < K_; ++s)
    for (Mode a = 0; a < K_; ++a) {
      // Commands without a controller fall back to holding the current mode.
      const Mode target = adjacency_(s, a) ? a : s;
      for (Mode next = 0; next < K_; ++next) {
        if (!adjacency_(s, next)) continue;
        base_[index(next, s, a)] = next == target ? config.alpha_valid : config.alpha_slip;
      }
    }
}

std::size_t DiscreteMdp::index(Mode next, Mode s, Mode a) const {
  require(next >= 0 && s >= 0 && a >= 0 && next < K_ && s < K_ && a < K_, "DiscreteMdp: index out of range");
  return (static_cast<std::size_t>(next) * K_ + s) * K_ + a;
}

Vec DiscreteMdp::concentration(Mode s, Mode a) const {
  Vec out(K_);
  for (Mode next = 0; next < K_; ++next) out(next) = alpha(next, s, a);
  return out;
}

Vec DiscreteMdp::transition(Mode s, Mode a) const {
  const Vec c = concentration(s, a);
  return c / c.sum();
}

void DiscreteMdp::set_counts(std::vector<double> counts) {
  require(counts.size() == counts_.size(), "DiscreteMdp: count tensor size");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    require(counts[i] >= 0.0 && std::isfinite(counts[i]), "DiscreteMdp: counts must be finite and >= 0");
    // Observed transitions are never masked.
    if (counts[i] > 0.0 && base_[i] <= epsilon_locked_) base_[i] = 0.0;
  }
  counts_ = std::move(counts);
}

void DiscreteMdp::add_count(Mode next, Mode s, Mode a, double amount) { counts_[index(next, s, a)] += amount; }

void DiscreteMdp::unlock(Mode next, Mode s, Mode a, double value) { base_[index(next, s, a)] = value; }

nlohmann::json DiscreteMdp::to_json() const {
  nlohmann::json alpha_json = nlohmann::json::array();
  for (Mode s = 0; s < K_; ++s)
    for (Mode a = 0; a < K_; ++a) {
      std::vector<double> row;
      for (Mode next = 0; next < K_; ++next) row.push_back(alpha(next, s, a));
      alpha_json.push_back({{"s", s}, {"a", a}, {"alpha", row}});
    }
  std::vector<double> pref(preference.data(), preference.data() + preference.size());
  return {{"K", K_}, {"preference", pref}, {"alpha", alpha_json}};
}

DiscreteMdp lift(const partition::AdjacencyMatrix& adjacency, const Mat& average_costs, const Vec& reward_per_mode,
                 const PlannerConfig& config) {
  const int K = adjacency.size();
  require(average_costs.rows() == K && average_costs.cols() == K, "lift: cost matrix shape");
  require(reward_per_mode.size() == K, "lift: reward vector size");
  DiscreteMdp mdp(adjacency, config);
  mdp.preference = config.kappa * reward_per_mode;

  double scale = 0.0;
  for (Mode s = 0; s < K; ++s)
    for (Mode a = 0; a < K; ++a)
      if (adjacency(s, a) && std::isfinite(average_costs(s, a))) scale = std::max(scale, average_costs(s, a));
  mdp.step_cost = Mat::Constant(K, K, std::numeric_limits<double>::infinity());
  for (Mode s = 0; s < K; ++s)
    for (Mode a = 0; a < K; ++a)
      if (adjacency(s, a) && std::isfinite(average_costs(s, a)))
        mdp.step_cost(s, a) = scale > 0.0 ? average_costs(s, a) / scale : 0.0;
  return mdp;
}

std::vector<std::string> update_dirichlet(DiscreteMdp& mdp, Mode s, Mode a, Mode next) {
  std::vector<std::string> diagnostics;
  if (!mdp.adjacency()(s, next) && mdp.count(next, s, a) == 0.0) {
    diagnostics.push_back("unlocked masked transition " + std::to_string(s) + " -> " + std::to_string(next) +
                          " under action " + std::to_string(a));
    mdp.unlock(next, s, a, 0.0);
  }
  mdp.add_count(next, s, a, 1.0);
  return diagnostics;
}

double dirichlet_kl(const Vec& a, const Vec& b) {
  require(a.size() == b.size() && a.size() >= 1, "dirichlet_kl: size mismatch");
  require((a.array() > 0.0).all() && (b.array() > 0.0).all(), "dirichlet_kl: concentrations must be positive");
  using boost::math::digamma;
  const double a0 = a.sum();
  const double b0 = b.sum();
  double kl = std::lgamma(a0) - std::lgamma(b0);
  const double psi_a0 = digamma(a0);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    kl += std::lgamma(b(i)) - std::lgamma(a(i)) + (a(i) - b(i)) * (digamma(a(i)) - psi_a0);
  return kl;
}

double expected_info_gain(const Vec& alpha) {
  require(alpha.size() >= 1 && (alpha.array() > 0.0).all(), "expected_info_gain: concentrations must be positive");
  using boost::math::digamma;
  // KL(Dir(alpha + e_j) || Dir(alpha)) = ln(a0 / a_j) + psi(a_j + 1) - psi(a0 + 1).
  const double a0 = alpha.sum();
  const double psi0 = digamma(a0 + 1.0);
  double total = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const double p = alpha(j) / a0;
    total += p * (std::log(a0) - std::log(alpha(j)) + digamma(alpha(j) + 1.0) - psi0);
  }
  return total;
}

namespace {

struct RunningMean {
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
  }
  double mean(int n) const { return sum / n; }
  double standard_error(int n) const {
    if (n < 2) return 0.0;
    const double m = sum / n;
    const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

Mode sample_index(const Vec& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * p.sum();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    acc += p(k);
    if (u < acc) return static_cast<Mode>(k);
  }
  for (Eigen::Index k = p.size(); k-- > 0;)
    if (p(k) > 0.0) return static_cast<Mode>(k);
  return 0;
}

}  // namespace

EfeBreakdown evaluate_policy(const DiscreteMdp& mdp, Mode s0, const DiscretePolicy& policy, int n_samples,
                             std::mt19937_64& rng, const PlannerConfig& config) {
  require(n_samples >= 1, "evaluate_policy: n_samples must be >= 1");
  require(s0 >= 0 && s0 < mdp.states(), "evaluate_policy: start state out of range");
  for (Mode a : policy) require(a >= 0 && a < mdp.states(), "evaluate_policy: action out of range");

  RunningMean utility, info, entropy, total;
  std::map<std::pair<Mode, Mode>, Vec> overlay;
  for (int n = 0; n < n_samples; ++n) {
    overlay.clear();
    double u_sum = 0.0, ig_sum = 0.0, h_sum = 0.0;
    Mode s = s0;
    for (Mode a : policy) {
      auto it = overlay.find({s, a});
      if (it == overlay.end()) it = overlay.emplace(std::pair{s, a}, mdp.concentration(s, a)).first;
      Vec& alpha = it->second;
      const Vec p = alpha / alpha.sum();
      if (config.info_gain) ig_sum += expected_info_gain(alpha);
      const Mode next = sample_index(p, rng);
      if (config.info_gain) h_sum += -std::log(p(next));
      u_sum += mdp.preference(next);
      alpha(next) += 1.0;
      s = next;
    }
    utility.add(u_sum);
    info.add(ig_sum);
    entropy.add(h_sum);
    total.add(-(u_sum + ig_sum + h_sum));
  }

  EfeBreakdown out;
  out.utility = utility.mean(n_samples);
  out.param_info_gain = info.mean(n_samples);
  out.state_entropy = entropy.mean(n_samples);
  out.utility_se = utility.standard_error(n_samples);
  out.param_info_gain_se = info.standard_error(n_samples);
  out.state_entropy_se = entropy.standard_error(n_samples);
  out.total_G_se = total.standard_error(n_samples);
  out.total_G = -(out.utility + out.param_info_gain + out.state_entropy);
  return out;
}

double log_policy_prior(const DiscreteMdp& mdp, Mode s0, const DiscretePolicy& policy, const PlannerConfig& config) {
  double cost = 0.0;
  Mode s = s0;
  for (Mode a : policy) {
    const double c = mdp.step_cost(s, a);
    if (mdp.feasible(s, a) && std::isfinite(c)) {
      cost += c;
      s = a;
    } else {
      cost += config.infeasible_cost;
    }
  }
  return -config.beta * cost;
}

std::vector<DiscretePolicy> enumerate_policies(const DiscreteMdp& mdp, Mode s0, const PlannerConfig& config,
                                               std::mt19937_64& rng) {
  require(config.horizon >= 1 && config.policy_cap >= 1, "enumerate_policies: invalid config");
  const int K = mdp.states();
  std::vector<Mode> first;
  for (Mode a = 0; a < K; ++a)
    if (mdp.feasible(s0, a)) first.push_back(a);

  double total = static_cast<double>(first.size());
  for (int h = 1; h < config.horizon; ++h) total *= K;

  std::vector<DiscretePolicy> out;
  if (total <= config.policy_cap) {
    DiscretePolicy pi(static_cast<std::size_t>(config.horizon), 0);
    const auto count = static_cast<long long>(total);
    for (long long code = 0; code < count; ++code) {
      long long rest = code;
      for (int h = config.horizon - 1; h >= 1; --h) {
        pi[static_cast<std::size_t>(h)] = static_cast<Mode>(rest % K);
        rest /= K;
      }
      pi[0] = first[static_cast<std::size_t>(rest)];
      out.push_back(pi);
    }
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick_first(0, first.size() - 1);
  std::uniform_int_distribution<Mode> pick(0, K - 1);
  for (int n = 0; n < config.policy_cap; ++n) {
    DiscretePolicy pi(static_cast<std::size_t>(config.horizon));
    pi[0] = first[pick_first(rng)];
    for (int h = 1; h < config.horizon; ++h) pi[static_cast<std::size_t>(h)] = pick(rng);
    out.push_back(std::move(pi));
  }
  return out;
}

Vec policy_posterior(const Vec& G, const Vec& log_prior) {
  require(G.size() == log_prior.size() && G.size() >= 1, "policy_posterior: size mismatch");
  const Vec logits = -G + log_prior;
  Vec p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

nlohmann::json Decision::to_json() const {
  std::vector<double> marginal(action_marginal.data(), action_marginal.data() + action_marginal.size());
  return {{"action", action},
          {"policy", policy},
          {"probability", probability},
          {"utility", breakdown.utility},
          {"param_info_gain", breakdown.param_info_gain},
          {"state_entropy", breakdown.state_entropy},
          {"G", breakdown.total_G},
          {"G_se", breakdown.total_G_se},
          {"log_prior", log_prior},
          {"policies_evaluated", policies_evaluated},
          {"action_marginal", marginal}};
}

Decision select_action(const DiscreteMdp& mdp, Mode s0, const PlannerConfig& config, std::mt19937_64& rng) {
  const auto policies = enumerate_policies(mdp, s0, config, rng);
  // Common random numbers: every policy sees the same rollout stream.
  const std::uint64_t stream = rng();
  Vec G(static_cast<Eigen::Index>(policies.size()));
  Vec lnE(G.size());
  std::vector<EfeBreakdown> breakdowns;
  breakdowns.reserve(policies.size());
  for (std::size_t i = 0; i < policies.size(); ++i) {
    std::mt19937_64 local(stream);
    breakdowns.push_back(evaluate_policy(mdp, s0, policies[i], config.n_samples, local, config));
    G(static_cast<Eigen::Index>(i)) = breakdowns.back().total_G;
    lnE(static_cast<Eigen::Index>(i)) = log_policy_prior(mdp, s0, policies[i], config);
  }
  const Vec q = policy_posterior(G, lnE);
  const auto chosen = static_cast<std::size_t>(sample_index(q, rng));

  Decision d;
  d.policy = policies[chosen];
  d.action = d.policy.front();
  d.probability = q(static_cast<Eigen::Index>(chosen));
  d.breakdown = breakdowns[chosen];
  d.log_prior = lnE(static_cast<Eigen::Index>(chosen));
  d.policies_evaluated = static_cast<int>(policies.size());
  d.action_marginal = Vec::Zero(mdp.states());
  for (std::size_t i = 0; i < policies.size(); ++i) d.action_marginal(policies[i].front()) += q(static_cast<Eigen::Index>(i));
  return d;
}

Mode infer_discrete_state(const Vec& q) {
  require(q.size() >= 1, "infer_discrete_state: empty input");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < q.size(); ++k)
    if (q(k) > q(best)) best = k;
  return static_cast<Mode>(best);
}

std::vector<double> remap_counts(const std::vector<double>& counts, int K_old, const std::vector<Mode>& mapping,
                                 int K_new) {
  require(counts.size() == static_cast<std::size_t>(K_old) * K_old * K_old, "remap_counts: tensor size");
  require(static_cast<int>(mapping.size()) == K_old, "remap_counts: mapping size");
  std::vector<double> out(static_cast<std::size_t>(K_new) * K_new * K_new, 0.0);
  auto idx = [](int K, Mode n, Mode s, Mode a) { return (static_cast<std::size_t>(n) * K + s) * K + a; };
  for (Mode n = 0; n < K_old; ++n)
    for (Mode s = 0; s < K_old; ++s)
      for (Mode a = 0; a < K_old; ++a) {
        const Mode nn = mapping[static_cast<std::size_t>(n)];
        const Mode ns = mapping[static_cast<std::size_t>(s)];
        const Mode na = mapping[static_cast<std::size_t>(a)];
        if (nn < 0 || ns < 0 || na < 0 || nn >= K_new || ns >= K_new || na >= K_new) continue;
        out[idx(K_new, nn, ns, na)] += counts[idx(K_old, n, s, a)];
      }
  return out;
}

}  // namespace hha::planner
