#include "hha/harness.hpp"
#include "hha_oracles/checks.hpp"
#include "hha_oracles/oracles.hpp"

#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using hha::harness::ExperimentConfig;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool no_info_gain = false;
  std::string baseline;
  std::string out = "out";
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file (missing keys keep defaults)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Run a single seed instead of the configured list");
  cmd->add_flag("--no-info-gain", opts.no_info_gain, "Drop the information-gain and entropy terms");
  cmd->add_option("--baseline", opts.baseline, "Replace the agent with a baseline")->check(CLI::IsMember({"random"}));
  cmd->add_option("--out", opts.out, "Artifact directory");
}

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig config = opts.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(opts.config_path);
  if (opts.no_info_gain) config.agent.planner.info_gain = false;
  if (opts.baseline == "random") config.baseline = hha::harness::Baseline::Random;
  return config;
}

int run_coverage(const CommonOptions& opts, std::optional<std::uint64_t> steps) {
  auto config = load_config(opts);
  if (opts.seed) config.coverage_seeds = {*opts.seed};
  if (steps) config.coverage_steps = *steps;
  config.validate();
  const auto exp = hha::harness::run_coverage_experiment(config);
  hha::harness::emit_artifacts(opts.out, config, &exp, nullptr);
  for (const auto& run : exp.runs)
    std::cout << "seed " << run.log.seed << ": coverage " << run.report.final_fraction << ", planner calls "
              << run.log.counters.planner_invocations << ", refits " << run.log.counters.refits << "\n";
  std::cout << "best coverage " << exp.best_fraction << " (seed " << exp.runs[exp.best].log.seed << ")\n"
            << "artifacts in " << opts.out << "\n";
  return EXIT_SUCCESS;
}

int run_rewards(const CommonOptions& opts, std::optional<int> episodes) {
  auto config = load_config(opts);
  if (opts.seed) config.reward_seeds = {*opts.seed};
  if (episodes) config.episodes = *episodes;
  config.validate();
  const auto exp = hha::harness::run_reward_experiment(config);
  hha::harness::emit_artifacts(opts.out, config, nullptr, &exp);
  for (const auto& run : exp.runs) {
    int successes = 0;
    for (const auto& ep : run.log.episodes) successes += ep.terminated;
    std::cout << "seed " << run.log.seed << ": " << successes << "/" << run.log.episodes.size()
              << " episodes reached the goal\n";
  }
  std::cout << "artifacts in " << opts.out << "\n";
  return EXIT_SUCCESS;
}

int run_fit_synthetic(std::uint64_t seed, int steps, int em_iters, const std::string& out) {
  const auto report = hha::oracle::fit_and_score(hha::oracle::two_mode_system(), steps, em_iters, seed);
  nlohmann::json doc = {{"seed", seed},
                        {"steps", steps},
                        {"em_iters", em_iters},
                        {"accuracy", report.accuracy},
                        {"dynamics_error", report.dynamics_error},
                        {"permutation", report.permutation},
                        {"elbo_trace", report.elbo_trace}};
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "fit_synthetic.json") << doc.dump(2) << "\n";
  std::cout << "accuracy " << report.accuracy << ", dynamics error " << report.dynamics_error << "\n";
  return EXIT_SUCCESS;
}

int run_oracle_suite(std::uint64_t seed) {
  int failures = 0;
  for (const auto& check : hha::oracle::oracle_checks()) {
    const auto result = check.run(seed);
    std::cout << hha::oracle::format(result) << std::endl;
    failures += !result.passed;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical hybrid agent experiments on continuous Mountain Car"};
  app.require_subcommand(1);

  CommonOptions cov_opts;
  std::optional<std::uint64_t> cov_steps;
  auto* coverage = app.add_subcommand("coverage", "State-space coverage runs (best of the configured seeds)");
  add_common(coverage, cov_opts);
  coverage->add_option("--steps", cov_steps, "Environment steps per seed");

  CommonOptions rew_opts;
  std::optional<int> rew_episodes;
  auto* rewards = app.add_subcommand("rewards", "Per-episode reward curves over the configured seeds");
  add_common(rewards, rew_opts);
  rewards->add_option("--episodes", rew_episodes, "Episodes per seed");

  std::uint64_t syn_seed = 0;
  int syn_steps = 3000, syn_iters = 20;
  std::string syn_out = "out";
  auto* synthetic = app.add_subcommand("fit-synthetic", "Fit the two-mode synthetic system and score recovery");
  synthetic->add_option("--seed", syn_seed);
  synthetic->add_option("--steps", syn_steps, "Sequence length")->check(CLI::PositiveNumber);
  synthetic->add_option("--em-iters", syn_iters)->check(CLI::NonNegativeNumber);
  synthetic->add_option("--out", syn_out);

  std::uint64_t oracle_seed = 20240601;
  auto* oracles = app.add_subcommand("oracle-suite", "Compare every module against its reference implementation");
  oracles->add_option("--seed", oracle_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*coverage) return run_coverage(cov_opts, cov_steps);
    if (*rewards) return run_rewards(rew_opts, rew_episodes);
    if (*synthetic) return run_fit_synthetic(syn_seed, syn_steps, syn_iters, syn_out);
    if (*oracles) return run_oracle_suite(oracle_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return EXIT_FAILURE;
}
