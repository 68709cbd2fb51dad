#pragma once

#include "hha/env.hpp"
#include "hha/lqr.hpp"
#include "hha/partition.hpp"
#include "hha/planner.hpp"
#include "hha/priors.hpp"
#include "hha/rslds.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hha::agent {

/// Observations are noise-free, so the emission covariance is pinned to a
/// small constant and the dynamics prior is kept weak relative to the
/// velocity scale (|v| <= 0.07).
struct AgentConfig {
  int K = 5;
  int refit_interval = 1000;
  int max_dwell = 50;
  int init_em_iters = 10;
  int refit_em_iters = 5;
  double iw_scale = 1e-8;
  double column_precision = 1e-6;
  double recurrence_ridge = 1e-2;
  /// Used when fit.learn_emission is false.
  double emission_variance = 1e-10;
  rslds::FitConfig fit = [] {
    rslds::FitConfig f;
    f.covariance_floor = 1e-12;
    f.learn_emission = false;
    return f;
  }();
  rslds::InitConfig init = [] {
    rslds::InitConfig i;
    i.covariance_floor = 1e-12;
    return i;
  }();
  partition::AdjacencyConfig adjacency{};
  priors::PriorConfig priors{};
  lqr::LqrConfig lqr = [] {
    lqr::LqrConfig l;
    l.horizon = 3;
    l.r = 1.0;
    return l;
  }();
  planner::PlannerConfig planner{};
};

/// Everything derived from one rSLDS fit. Immutable between refits.
struct ModelBundle {
  rslds::RsldsParams params;
  partition::SoftmaxPartition partition;
  partition::AdjacencyReport adjacency;
  std::vector<std::optional<priors::ControlPrior>> priors;
  lqr::LqrCache cache;
  std::vector<std::string> fit_warnings;

  nlohmann::json to_json() const;
};

enum class Trigger { None, ModeChange, ForcedDwell };

struct TickResult {
  double force = 0.0;
  Mode mode = kNoMode;
  Mode command = kNoMode;
  Trigger trigger = Trigger::None;
  Mode previous_mode = kNoMode;
  std::optional<planner::Decision> decision;
  bool random_action = false;
  bool refit = false;
  std::vector<std::string> diagnostics;
};

struct RefitEvent {
  int index = 0;
  std::uint64_t step = 0;
  bool success = false;
  std::vector<Mode> label_mapping;  ///< old mode -> new mode
  nlohmann::json snapshot;
  std::vector<std::string> diagnostics;
};

struct AgentCounters {
  std::uint64_t steps = 0;
  std::uint64_t planner_invocations = 0;
  std::uint64_t mode_change_events = 0;
  std::uint64_t forced_dwell_events = 0;
  std::uint64_t dirichlet_updates = 0;
  std::uint64_t refits = 0;
  std::uint64_t prior_computations = 0;
};

/// Perception-planning-control loop on a fully observed environment.
class HybridAgent {
 public:
  HybridAgent(AgentConfig config, env::MountainCarConfig env_config, std::uint64_t seed);

  /// Starts a new data sequence at the given observation.
  void begin_episode(const Vec& observation);

  /// Consumes the current observation and returns the force to apply.
  TickResult tick(const Vec& observation);

  /// Closes the episode. On termination the final transition is counted
  /// and the reward is credited to the mode it landed in.
  void end_episode(const Vec& final_observation, double reward, bool terminated);

  const AgentConfig& config() const { return config_; }
  const AgentCounters& counters() const { return counters_; }
  const std::optional<ModelBundle>& model() const { return model_; }
  const planner::DiscreteMdp& mdp() const { return mdp_; }
  Vec reward_per_mode() const;
  const std::vector<RefitEvent>& refit_events() const { return refits_; }

  /// Runs a refit immediately on the accumulated data.
  RefitEvent refit_now();

  /// Full-state hash of the derived modules (changes only at refits).
  std::string module_fingerprint() const;

 private:
  struct EpisodeData {
    std::vector<Vec> y;
    std::vector<Vec> u;
  };

  rslds::TrajectoryBatch collect_batch() const;
  Mode read_mode(const Vec& x, const Vec& u_prev) const;
  void filter(const Vec& observation);
  double control_force(Mode mode, Mode command, int step);
  void replan(Mode mode, TickResult& result);

  AgentConfig config_;
  env::MountainCarConfig env_config_;
  std::mt19937_64 rng_;

  std::optional<ModelBundle> model_;
  planner::DiscreteMdp mdp_;
  std::vector<double> reward_sum_;
  std::vector<double> mode_entries_;

  std::vector<EpisodeData> episodes_;
  Vec estimate_;
  Mat estimate_cov_;
  Vec u_prev_;
  Mode mode_ = kNoMode;
  Mode command_ = kNoMode;
  int dwell_ = 0;
  int command_step_ = 0;
  std::uint64_t steps_since_refit_ = 0;
  AgentCounters counters_;
  std::vector<RefitEvent> refits_;
};

/// Greedy maximum-overlap matching between two labelings of the same
/// points: mapping[old] = new, or -1 when unmatched.
std::vector<Mode> match_labels(const std::vector<Mode>& old_labels, const std::vector<Mode>& new_labels, int K_old,
                               int K_new);

/// Fits the full module stack on a batch. `previous` warm-starts the fit.
ModelBundle build_model(const rslds::TrajectoryBatch& batch, const AgentConfig& config,
                        const env::MountainCarConfig& env_config, const rslds::RsldsParams* previous,
                        std::mt19937_64& rng, std::uint64_t* prior_calls = nullptr);

}  // namespace hha::agent
