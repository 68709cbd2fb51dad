// Acceptance criteria 1-12. Criteria 1-8 are oracle comparisons, 9-12 run
// the Mountain Car experiments with the default configuration.
#include "hha/harness.hpp"
#include "hha_oracles/checks.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace hha;
using hha::oracle::CheckResult;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

template <class Body>
CheckResult timed(int id, std::string name, double budget, Body&& body) {
  CheckResult result;
  result.id = id;
  result.name = std::move(name);
  result.budget_seconds = budget;
  const auto start = Clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  result.passed = ok && result.seconds <= budget;
  if (ok && !result.passed) detail << "; over the " << budget << " s budget";
  result.detail = detail.str();
  return result;
}

struct Experiments {
  std::vector<const harness::RunLog*> logs;
  harness::RewardExperiment rewards;
  std::vector<harness::CoverageExperiment> coverage;
};

CheckResult check_task_success(Experiments& store, const fs::path& out) {
  return timed(9, "task-success", 30 * 60.0, [&](std::ostream& detail) {
    const harness::ExperimentConfig config;
    store.rewards = harness::run_reward_experiment(config);
    harness::emit_artifacts(out / "rewards", config, nullptr, &store.rewards);
    int seeds_found = 0;
    bool capitalised = true;
    detail << "first success per seed:";
    for (const auto& run : store.rewards.runs) {
      store.logs.push_back(&run.log);
      const auto& eps = run.log.episodes;
      std::size_t first = eps.size();
      for (std::size_t e = 0; e < eps.size(); ++e)
        if (eps[e].terminated) {
          first = e;
          break;
        }
      if (first == eps.size()) {
        detail << " -";
        continue;
      }
      ++seeds_found;
      int later = 0, later_success = 0;
      for (std::size_t e = first + 1; e < eps.size(); ++e) {
        ++later;
        later_success += eps[e].terminated;
      }
      const double rate = later > 0 ? static_cast<double>(later_success) / later : 1.0;
      capitalised = capitalised && rate >= 0.7;
      detail << " " << first << " (" << later_success << "/" << later << " after)";
    }
    detail << "; seeds with a success " << seeds_found << "/" << store.rewards.runs.size() << " (need 4)";
    return seeds_found >= 4 && capitalised;
  });
}

CheckResult check_exploration_ordering(Experiments& store, const fs::path& out) {
  return timed(10, "exploration-ordering", 45 * 60.0, [&](std::ostream& detail) {
    harness::ExperimentConfig with_ig;
    harness::ExperimentConfig without_ig;
    without_ig.agent.planner.info_gain = false;
    harness::ExperimentConfig random;
    random.baseline = harness::Baseline::Random;
    const std::vector<std::pair<std::string, harness::ExperimentConfig>> variants{
        {"with_ig", with_ig}, {"without_ig", without_ig}, {"random", random}};
    std::vector<double> best;
    for (const auto& [name, config] : variants) {
      store.coverage.push_back(harness::run_coverage_experiment(config));
      harness::emit_artifacts(out / ("coverage_" + name), config, &store.coverage.back(), nullptr);
      best.push_back(store.coverage.back().best_fraction);
      detail << name << " " << best.back() << " (";
      for (std::size_t i = 0; i < store.coverage.back().runs.size(); ++i)
        detail << (i ? " " : "") << store.coverage.back().runs[i].report.final_fraction;
      detail << "); ";
    }
    for (const auto& exp : store.coverage)
      for (const auto& run : exp.runs) store.logs.push_back(&run.log);
    const bool ordered = best[0] > best[1] && best[1] > best[2];
    const double margin = best[0] - best[2];
    detail << "ordering " << (ordered ? "holds" : "violated") << ", margin " << margin << " (need 0.15)";
    return ordered && margin >= 0.15;
  });
}

CheckResult check_abstraction_accounting(Experiments& store) {
  return timed(11, "abstraction-accounting", 30 * 60.0, [&](std::ostream& detail) {
    harness::RewardExperiment local;
    if (store.logs.empty()) {
      harness::ExperimentConfig config;
      config.reward_seeds = {0, 1};
      local = harness::run_reward_experiment(config);
      for (const auto& run : local.runs) store.logs.push_back(&run.log);
    }
    int checked = 0, mismatched = 0;
    std::uint64_t calls = 0;
    for (const auto* log : store.logs) {
      if (log->counters.steps == 0) continue;
      const auto& c = log->counters;
      const bool ok = c.planner_invocations == c.mode_change_events + c.forced_dwell_events &&
                      log->logged_decisions() == log->logged_mode_changes() + log->logged_forced_dwells() &&
                      log->logged_decisions() == c.planner_invocations;
      ++checked;
      mismatched += !ok;
      calls += c.planner_invocations;
    }
    detail << checked << " agent runs, " << calls << " planner calls, " << mismatched << " mismatched";
    store.logs.clear();
    return checked > 0 && mismatched == 0;
  });
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CheckResult check_determinism(const fs::path& out) {
  return timed(12, "determinism", 30 * 60.0, [&](std::ostream& detail) {
    harness::ExperimentConfig config;
    config.coverage_seeds = {0, 1};
    config.coverage_steps = 3000;
    config.reward_seeds = {0};
    config.episodes = 8;
    std::vector<fs::path> dirs{out / "determinism_a", out / "determinism_b"};
    for (const auto& dir : dirs) {
      fs::remove_all(dir);
      const auto cov = harness::run_coverage_experiment(config);
      const auto rew = harness::run_reward_experiment(config);
      harness::emit_artifacts(dir, config, &cov, &rew);
    }
    int files = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      if (slurp(entry.path()) != slurp(dirs[1] / entry.path().filename())) {
        ++differing;
        detail << entry.path().filename().string() << " differs; ";
      }
    }
    detail << files << " CSV files compared, " << differing << " differ";
    return files > 0 && differing == 0;
  });
}

std::set<int> parse_criteria(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    const int lo = std::stoi(part.substr(0, dash));
    const int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
    for (int i = lo; i <= hi; ++i) out.insert(i);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-12"};
  std::string criteria = "1-12";
  std::uint64_t seed = 20240601;
  std::string out = "acceptance_artifacts";
  app.add_option("--criteria", criteria, "Comma-separated ids or ranges, e.g. 1-8,11");
  app.add_option("--seed", seed, "Seed for the oracle criteria");
  app.add_option("--out", out, "Artifact directory for the experiment criteria");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  try {
    selected = parse_criteria(criteria);
  } catch (const std::exception&) {
    std::cerr << "error: cannot parse --criteria '" << criteria << "'\n";
    return 2;
  }

  int failures = 0, ran = 0;
  auto report = [&](const CheckResult& r) {
    std::cout << oracle::format(r) << std::endl;
    failures += !r.passed;
    ++ran;
  };
  for (const auto& check : oracle::oracle_checks())
    if (selected.count(check.id)) report(check.run(seed));

  Experiments store;
  if (selected.count(9)) report(check_task_success(store, out));
  if (selected.count(10)) report(check_exploration_ordering(store, out));
  if (selected.count(11)) report(check_abstraction_accounting(store));
  if (selected.count(12)) report(check_determinism(out));

  std::cout << ran - failures << "/" << ran << " criteria passed" << std::endl;
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
