#pragma once

#include "hha/agent.hpp"
#include "hha/env.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hha::harness {

enum class Baseline { None, Random };

struct ExperimentConfig {
  agent::AgentConfig agent{};
  env::MountainCarConfig env{};
  Baseline baseline = Baseline::None;

  std::vector<std::uint64_t> coverage_seeds{0, 1, 2};
  std::uint64_t coverage_steps = 10000;
  int coverage_bins = 32;
  std::uint64_t coverage_checkpoint_every = 500;
  /// Episode truncation during coverage runs; 0 disables truncation.
  int coverage_episode_length = 200;

  std::vector<std::uint64_t> reward_seeds{0, 1, 2, 3, 4, 5};
  int episodes = 20;
  int max_episode_steps = 200;

  /// Canonical JSON (sorted keys, every field present).
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// fnv1a of the canonical JSON dump.
  std::string hash() const;
  void validate() const;
};

struct StepRecord {
  std::uint64_t step = 0;
  int episode = 0;
  int episode_step = 0;
  double position = 0.0;
  double velocity = 0.0;
  double force = 0.0;
  Mode mode = kNoMode;
  Mode command = kNoMode;
  agent::Trigger trigger = agent::Trigger::None;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool refit = false;
};

struct EpisodeSummary {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  bool terminated = false;
};

struct RunLog {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<nlohmann::json> decisions;
  std::vector<nlohmann::json> refit_snapshots;
  std::vector<EpisodeSummary> episodes;
  agent::AgentCounters counters{};
  std::vector<std::string> diagnostics;

  /// Planner calls, mode-change and forced-dwell events recounted from the
  /// step records.
  std::uint64_t logged_decisions() const;
  std::uint64_t logged_mode_changes() const;
  std::uint64_t logged_forced_dwells() const;
};

struct CoverageReport {
  int bins = 0;
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> fractions;
  double final_fraction = 0.0;
  Eigen::MatrixXi visits;  ///< position bin x velocity bin

  /// Bin index of a state, clamped into the grid.
  static std::pair<int, int> bin_of(const env::MountainCarConfig& env, int bins, double position, double velocity);
};

/// Fraction of grid cells with at least one visit.
double coverage_fraction(const Eigen::MatrixXi& visits);

struct CoverageRun {
  RunLog log;
  CoverageReport report;
};

struct CoverageExperiment {
  std::vector<CoverageRun> runs;
  std::size_t best = 0;
  double best_fraction = 0.0;
};

struct RewardRun {
  RunLog log;
  std::vector<double> episode_rewards;
};

struct RewardExperiment {
  std::vector<RewardRun> runs;
  std::vector<double> mean;
  std::vector<double> stddev;
};

CoverageRun run_coverage(const ExperimentConfig& config, std::uint64_t seed);
CoverageExperiment run_coverage_experiment(const ExperimentConfig& config);

RewardRun run_rewards(const ExperimentConfig& config, std::uint64_t seed);
RewardExperiment run_reward_experiment(const ExperimentConfig& config);

/// Writes config.json, run_log.csv, decisions.jsonl, refit_snapshots/,
/// coverage.csv, coverage_counts.csv, rewards.csv and summary.json. Either
/// experiment pointer may be null; its files are then written headers-only.
void emit_artifacts(const std::filesystem::path& out_dir, const ExperimentConfig& config,
                    const CoverageExperiment* coverage, const RewardExperiment* rewards);

std::string trigger_name(agent::Trigger trigger);

}  // namespace hha::harness
