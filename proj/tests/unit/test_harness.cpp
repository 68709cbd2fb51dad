#include "hha/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace hha;
using namespace hha::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig random_config() {
  ExperimentConfig c;
  c.baseline = Baseline::Random;
  c.coverage_seeds = {0, 1};
  c.coverage_steps = 2000;
  c.coverage_checkpoint_every = 300;
  c.reward_seeds = {0};
  c.episodes = 3;
  return c;
}

std::vector<std::string> data_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  return lines;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hha_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config JSON roundtrips and hashes stably") {
  ExperimentConfig c;
  c.agent.K = 7;
  c.agent.lqr.r = 3.5;
  c.coverage_seeds = {4, 5};
  c.baseline = Baseline::Random;
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(back.hash() != ExperimentConfig{}.hash());
}

TEST_CASE("partial configs keep defaults") {
  const auto c = ExperimentConfig::from_json(nlohmann::json{{"coverage", {{"steps", 42}}}});
  CHECK(c.coverage_steps == 42);
  CHECK(c.coverage_bins == ExperimentConfig{}.coverage_bins);
  CHECK(c.agent.K == ExperimentConfig{}.agent.K);
}

TEST_CASE("unknown or invalid config entries are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"colour", 1}}), ContractViolation);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"agent", {{"kk", 1}}}}), ContractViolation);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"baseline", "greedy"}}), ContractViolation);
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"agent", {{"K", 0}}}}), ContractViolation);
}

TEST_CASE("zero steps give zero coverage") {
  auto c = random_config();
  c.coverage_steps = 0;
  const auto run = run_coverage(c, 0);
  CHECK(run.report.final_fraction == 0.0);
  CHECK(run.log.steps.empty());
}

TEST_CASE("visiting every bin gives full coverage") {
  const env::MountainCarConfig env;
  const int bins = 32;
  Eigen::MatrixXi visits = Eigen::MatrixXi::Zero(bins, bins);
  const double dp = (env.max_position - env.min_position) / bins;
  const double dv = 2.0 * env.max_speed / bins;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const auto [p, v] =
          CoverageReport::bin_of(env, bins, env.min_position + (i + 0.5) * dp, -env.max_speed + (j + 0.5) * dv);
      CHECK(p == i);
      CHECK(v == j);
      ++visits(p, v);
    }
  CHECK(coverage_fraction(visits) == 1.0);
  visits(3, 4) = 0;
  CHECK(coverage_fraction(visits) == doctest::Approx(1.0 - 1.0 / (bins * bins)));
}

TEST_CASE("bin_of clamps the box edges") {
  const env::MountainCarConfig env;
  CHECK(CoverageReport::bin_of(env, 32, env.max_position, env.max_speed) == std::pair<int, int>{31, 31});
  CHECK(CoverageReport::bin_of(env, 32, env.min_position, -env.max_speed) == std::pair<int, int>{0, 0});
}

TEST_CASE("coverage is non-decreasing along a run") {
  auto c = random_config();
  c.coverage_episode_length = 150;
  const auto run = run_coverage(c, 3);
  const auto& f = run.report.fractions;
  REQUIRE(f.size() == run.report.checkpoints.size());
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i] >= f[i - 1]);
  CHECK(run.report.checkpoints.back() == c.coverage_steps);
  CHECK(run.report.final_fraction == f.back());
  CHECK(run.report.visits.sum() == static_cast<int>(c.coverage_steps));
  for (const auto& s : run.log.steps) CHECK(s.episode_step < c.coverage_episode_length);
}

TEST_CASE("best-of-seeds picks the maximum") {
  const auto exp = run_coverage_experiment(random_config());
  REQUIRE(exp.runs.size() == 2);
  for (const auto& r : exp.runs) CHECK(r.report.final_fraction <= exp.best_fraction);
  CHECK(exp.runs[exp.best].report.final_fraction == exp.best_fraction);
}

TEST_CASE("artifact files follow the documented shapes") {
  const auto c = random_config();
  const auto cov = run_coverage_experiment(c);
  const auto rew = run_reward_experiment(c);
  const auto dir = scratch_dir("artifacts");
  emit_artifacts(dir, c, &cov, &rew);

  const auto coverage = data_lines(dir / "coverage.csv");
  REQUIRE_FALSE(coverage.empty());
  CHECK(coverage.front() == "step,seed_0,seed_1,best");
  CHECK(coverage.size() - 1 == cov.runs.front().report.checkpoints.size());

  const auto counts = data_lines(dir / "coverage_counts.csv");
  CHECK(counts.size() - 1 == cov.runs.size() * 32 * 32);

  const auto rewards = data_lines(dir / "rewards.csv");
  CHECK(rewards.size() - 1 == static_cast<std::size_t>(c.episodes));

  std::size_t steps = 0;
  for (const auto& r : cov.runs) steps += r.log.steps.size();
  for (const auto& r : rew.runs) steps += r.log.steps.size();
  CHECK(data_lines(dir / "run_log.csv").size() - 1 == steps);

  std::ifstream cfg(dir / "config.json");
  const auto doc = nlohmann::json::parse(cfg);
  CHECK(doc.at("config_hash") == c.hash());
  CHECK(ExperimentConfig::from_json(doc.at("config")).hash() == c.hash());
  fs::remove_all(dir);
}

TEST_CASE("artifacts are byte-identical across reruns") {
  auto c = random_config();
  c.coverage_steps = 500;
  const auto a = scratch_dir("rerun_a");
  const auto b = scratch_dir("rerun_b");
  const auto ca = run_coverage_experiment(c);
  emit_artifacts(a, c, &ca, nullptr);
  const auto cb = run_coverage_experiment(c);
  emit_artifacts(b, c, &cb, nullptr);
  for (const char* name : {"run_log.csv", "coverage.csv", "coverage_counts.csv", "config.json"})
    CHECK(data_lines(a / name) == data_lines(b / name));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("reward episodes stop at the goal") {
  ExperimentConfig c = random_config();
  c.env.start_position = 0.49;
  c.env.start_velocity = 0.05;
  c.episodes = 2;
  const auto run = run_rewards(c, 0);
  REQUIRE(run.log.episodes.size() == 2);
  for (const auto& ep : run.log.episodes) {
    CHECK(ep.terminated);
    CHECK(ep.steps == 1);
  }
  CHECK(run.log.steps.back().terminated);
  CHECK(run.episode_rewards.front() > 0.0);
}

TEST_CASE("reward episodes truncate at the step budget") {
  ExperimentConfig c = random_config();
  c.max_episode_steps = 25;
  c.episodes = 2;
  const auto run = run_rewards(c, 1);
  for (const auto& ep : run.log.episodes) {
    CHECK_FALSE(ep.terminated);
    CHECK(ep.steps == 25);
  }
  CHECK(run.log.steps.back().truncated);
  CHECK(run.log.steps.size() == 50);
}
