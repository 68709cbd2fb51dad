#include "hha/harness.hpp"

#include "hha/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hha::harness {
namespace {

using nlohmann::json;

/// Reads keys from an object, remembering which were consumed so that
/// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    require(doc_.is_object(), "config: '" + where_ + "' must be an object");
  }
  ~Reader() = default;

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (doc_.contains(key)) {
      try {
        out = doc_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ContractViolation("config: bad value for '" + where_ + "." + key + "': " + e.what());
      }
    }
  }

  std::optional<Reader> section(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    return Reader(doc_.at(key), where_ + "." + key);
  }

  void finish() const {
    for (const auto& item : doc_.items())
      if (!seen_.count(item.key())) throw ContractViolation("config: unknown key '" + where_ + "." + item.key() + "'");
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

json agent_to_json(const agent::AgentConfig& a) {
  return {
      {"K", a.K},
      {"refit_interval", a.refit_interval},
      {"max_dwell", a.max_dwell},
      {"init_em_iters", a.init_em_iters},
      {"refit_em_iters", a.refit_em_iters},
      {"iw_scale", a.iw_scale},
      {"column_precision", a.column_precision},
      {"recurrence_ridge", a.recurrence_ridge},
      {"emission_variance", a.emission_variance},
      {"fit",
       {{"newton_max_iters", a.fit.newton.max_iters},
        {"newton_grad_tol", a.fit.newton.grad_tol},
        {"newton_max_halvings", a.fit.newton.max_halvings},
        {"newton_decrement_tol", a.fit.newton.decrement_tol},
        {"covariance_floor", a.fit.covariance_floor},
        {"responsibility_floor", a.fit.responsibility_floor},
        {"recurrence_newton_iters", a.fit.recurrence_newton_iters},
        {"learn_emission", a.fit.learn_emission}}},
      {"init",
       {{"kmeans_iters", a.init.kmeans_iters},
        {"covariance_floor", a.init.covariance_floor},
        {"recurrence_ridge", a.init.recurrence_ridge},
        {"pad_jitter", a.init.pad_jitter}}},
      {"adjacency", {{"epsilon", a.adjacency.epsilon}}},
      {"priors",
       {{"threshold", a.priors.threshold},
        {"step_size", a.priors.step_size},
        {"max_iters", a.priors.max_iters},
        {"sigma_sq", a.priors.sigma_sq}}},
      {"lqr",
       {{"horizon", a.lqr.horizon},
        {"q_f", a.lqr.q_f},
        {"r", a.lqr.r},
        {"max_cost_samples", a.lqr.max_cost_samples}}},
      {"planner",
       {{"horizon", a.planner.horizon},
        {"policy_cap", a.planner.policy_cap},
        {"n_samples", a.planner.n_samples},
        {"alpha_valid", a.planner.alpha_valid},
        {"alpha_slip", a.planner.alpha_slip},
        {"epsilon_locked", a.planner.epsilon_locked},
        {"kappa", a.planner.kappa},
        {"beta", a.planner.beta},
        {"info_gain", a.planner.info_gain},
        {"infeasible_cost", a.planner.infeasible_cost}}},
  };
}

void agent_from_json(Reader& r, agent::AgentConfig& a) {
  r.read("K", a.K);
  r.read("refit_interval", a.refit_interval);
  r.read("max_dwell", a.max_dwell);
  r.read("init_em_iters", a.init_em_iters);
  r.read("refit_em_iters", a.refit_em_iters);
  r.read("iw_scale", a.iw_scale);
  r.read("column_precision", a.column_precision);
  r.read("recurrence_ridge", a.recurrence_ridge);
  r.read("emission_variance", a.emission_variance);
  if (auto s = r.section("fit")) {
    s->read("newton_max_iters", a.fit.newton.max_iters);
    s->read("newton_grad_tol", a.fit.newton.grad_tol);
    s->read("newton_max_halvings", a.fit.newton.max_halvings);
    s->read("newton_decrement_tol", a.fit.newton.decrement_tol);
    s->read("covariance_floor", a.fit.covariance_floor);
    s->read("responsibility_floor", a.fit.responsibility_floor);
    s->read("recurrence_newton_iters", a.fit.recurrence_newton_iters);
    s->read("learn_emission", a.fit.learn_emission);
    s->finish();
  }
  if (auto s = r.section("init")) {
    s->read("kmeans_iters", a.init.kmeans_iters);
    s->read("covariance_floor", a.init.covariance_floor);
    s->read("recurrence_ridge", a.init.recurrence_ridge);
    s->read("pad_jitter", a.init.pad_jitter);
    s->finish();
  }
  if (auto s = r.section("adjacency")) {
    s->read("epsilon", a.adjacency.epsilon);
    s->finish();
  }
  if (auto s = r.section("priors")) {
    s->read("threshold", a.priors.threshold);
    s->read("step_size", a.priors.step_size);
    s->read("max_iters", a.priors.max_iters);
    s->read("sigma_sq", a.priors.sigma_sq);
    s->finish();
  }
  if (auto s = r.section("lqr")) {
    s->read("horizon", a.lqr.horizon);
    s->read("q_f", a.lqr.q_f);
    s->read("r", a.lqr.r);
    s->read("max_cost_samples", a.lqr.max_cost_samples);
    s->finish();
  }
  if (auto s = r.section("planner")) {
    s->read("horizon", a.planner.horizon);
    s->read("policy_cap", a.planner.policy_cap);
    s->read("n_samples", a.planner.n_samples);
    s->read("alpha_valid", a.planner.alpha_valid);
    s->read("alpha_slip", a.planner.alpha_slip);
    s->read("epsilon_locked", a.planner.epsilon_locked);
    s->read("kappa", a.planner.kappa);
    s->read("beta", a.planner.beta);
    s->read("info_gain", a.planner.info_gain);
    s->read("infeasible_cost", a.planner.infeasible_cost);
    s->finish();
  }
}

json env_to_json(const env::MountainCarConfig& e) {
  return {{"min_position", e.min_position},
          {"max_position", e.max_position},
          {"max_speed", e.max_speed},
          {"min_action", e.min_action},
          {"max_action", e.max_action},
          {"power", e.power},
          {"gravity", e.gravity},
          {"goal_position", e.goal_position},
          {"goal_reward", e.goal_reward},
          {"control_penalty", e.control_penalty},
          {"inelastic_left_wall", e.inelastic_left_wall},
          {"start_position", e.start_position},
          {"start_velocity", e.start_velocity}};
}

void env_from_json(Reader& r, env::MountainCarConfig& e) {
  r.read("min_position", e.min_position);
  r.read("max_position", e.max_position);
  r.read("max_speed", e.max_speed);
  r.read("min_action", e.min_action);
  r.read("max_action", e.max_action);
  r.read("power", e.power);
  r.read("gravity", e.gravity);
  r.read("goal_position", e.goal_position);
  r.read("goal_reward", e.goal_reward);
  r.read("control_penalty", e.control_penalty);
  r.read("inelastic_left_wall", e.inelastic_left_wall);
  r.read("start_position", e.start_position);
  r.read("start_velocity", e.start_velocity);
}

}  // namespace

json ExperimentConfig::to_json() const {
  return {{"agent", agent_to_json(agent)},
          {"env", env_to_json(env)},
          {"baseline", baseline == Baseline::Random ? "random" : "none"},
          {"coverage",
           {{"seeds", coverage_seeds},
            {"steps", coverage_steps},
            {"bins", coverage_bins},
            {"checkpoint_every", coverage_checkpoint_every},
            {"episode_length", coverage_episode_length}}},
          {"rewards", {{"seeds", reward_seeds}, {"episodes", episodes}, {"max_episode_steps", max_episode_steps}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  Reader root(doc, "config");
  if (auto s = root.section("agent")) {
    agent_from_json(*s, c.agent);
    s->finish();
  }
  if (auto s = root.section("env")) {
    env_from_json(*s, c.env);
    s->finish();
  }
  std::string baseline = "none";
  root.read("baseline", baseline);
  if (baseline == "random") c.baseline = Baseline::Random;
  else if (baseline == "none") c.baseline = Baseline::None;
  else throw ContractViolation("config: baseline must be 'none' or 'random', got '" + baseline + "'");
  if (auto s = root.section("coverage")) {
    s->read("seeds", c.coverage_seeds);
    s->read("steps", c.coverage_steps);
    s->read("bins", c.coverage_bins);
    s->read("checkpoint_every", c.coverage_checkpoint_every);
    s->read("episode_length", c.coverage_episode_length);
    s->finish();
  }
  if (auto s = root.section("rewards")) {
    s->read("seeds", c.reward_seeds);
    s->read("episodes", c.episodes);
    s->read("max_episode_steps", c.max_episode_steps);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ContractViolation("config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

std::string ExperimentConfig::hash() const { return io::fnv1a_hex(to_json().dump()); }

void ExperimentConfig::validate() const {
  require(agent.K >= 1, "config: agent.K must be >= 1");
  require(agent.refit_interval >= 1 && agent.max_dwell >= 1, "config: refit_interval and max_dwell must be >= 1");
  require(agent.planner.horizon >= 1 && agent.planner.n_samples >= 1, "config: planner horizon/samples must be >= 1");
  require(agent.lqr.horizon >= 1 && agent.lqr.r > 0.0, "config: lqr horizon >= 1 and r > 0");
  require(coverage_bins >= 1 && coverage_checkpoint_every >= 1, "config: coverage bins/checkpoints must be >= 1");
  require(episodes >= 0 && max_episode_steps >= 1, "config: episode budget");
  require(coverage_episode_length >= 0, "config: coverage.episode_length must be >= 0");
}

std::string trigger_name(agent::Trigger trigger) {
  switch (trigger) {
    case agent::Trigger::ModeChange: return "mode_change";
    case agent::Trigger::ForcedDwell: return "forced_dwell";
    case agent::Trigger::None: break;
  }
  return "none";
}

std::uint64_t RunLog::logged_decisions() const { return decisions.size(); }

std::uint64_t RunLog::logged_mode_changes() const {
  std::uint64_t n = 0;
  for (const auto& s : steps) n += s.trigger == agent::Trigger::ModeChange;
  return n;
}

std::uint64_t RunLog::logged_forced_dwells() const {
  std::uint64_t n = 0;
  for (const auto& s : steps) n += s.trigger == agent::Trigger::ForcedDwell;
  return n;
}

std::pair<int, int> CoverageReport::bin_of(const env::MountainCarConfig& env, int bins, double position,
                                           double velocity) {
  auto bin = [bins](double v, double lo, double hi) {
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
  };
  return {bin(position, env.min_position, env.max_position), bin(velocity, -env.max_speed, env.max_speed)};
}

double coverage_fraction(const Eigen::MatrixXi& visits) {
  if (visits.size() == 0) return 0.0;
  return static_cast<double>((visits.array() > 0).count()) / static_cast<double>(visits.size());
}

namespace {

/// Drives either the hybrid agent or the random baseline through one run.
class Runner {
 public:
  Runner(const ExperimentConfig& config, std::uint64_t seed) : config_(config), car_(config.env), rng_(seed) {
    log.seed = seed;
    if (config.baseline == Baseline::None) agent_.emplace(config.agent, config.env, seed);
  }

  env::EnvState start_episode() {
    state_ = car_.reset(log.seed);
    episode_step_ = 0;
    episode_reward_ = 0.0;
    if (agent_) agent_->begin_episode(vec(state_));
    return state_;
  }

  /// One environment step; returns the outcome.
  env::StepOutcome step() {
    StepRecord rec;
    rec.step = step_;
    rec.episode = episode_;
    rec.episode_step = episode_step_;
    rec.position = state_.position;
    rec.velocity = state_.velocity;
    double force = 0.0;
    if (agent_) {
      auto result = agent_->tick(vec(state_));
      force = result.force;
      rec.mode = result.mode;
      rec.command = result.command;
      rec.trigger = result.trigger;
      rec.refit = result.refit;
      if (result.decision) {
        json d = result.decision->to_json();
        d["seed"] = log.seed;
        d["step"] = step_;
        d["mode"] = result.mode;
        d["previous_mode"] = result.previous_mode;
        d["trigger"] = trigger_name(result.trigger);
        log.decisions.push_back(std::move(d));
      }
      if (result.refit) {
        json snap = agent_->refit_events().back().snapshot;
        snap["seed"] = log.seed;
        log.refit_snapshots.push_back(std::move(snap));
      }
      for (auto& msg : result.diagnostics) log.diagnostics.push_back("step " + std::to_string(step_) + ": " + msg);
    } else {
      std::uniform_real_distribution<double> unif(config_.env.min_action, config_.env.max_action);
      force = unif(rng_);
    }
    rec.force = force;
    const auto out = car_.step(state_, {force});
    rec.reward = out.reward;
    rec.terminated = out.terminated;
    episode_reward_ += out.reward;
    state_ = out.next_state;
    ++step_;
    ++episode_step_;
    log.steps.push_back(rec);
    return out;
  }

  void finish_episode(bool terminated, double last_reward) {
    if (!log.steps.empty() && !terminated) log.steps.back().truncated = true;
    if (agent_) agent_->end_episode(vec(state_), last_reward, terminated);
    log.episodes.push_back({episode_, episode_step_, episode_reward_, terminated});
    ++episode_;
  }

  void close() {
    if (agent_) log.counters = agent_->counters();
  }

  const env::EnvState& state() const { return state_; }
  int episode_step() const { return episode_step_; }

  RunLog log;

 private:
  static Vec vec(const env::EnvState& s) {
    Vec v(2);
    v << s.position, s.velocity;
    return v;
  }

  const ExperimentConfig& config_;
  env::MountainCar car_;
  std::mt19937_64 rng_;
  std::optional<agent::HybridAgent> agent_;
  env::EnvState state_{};
  std::uint64_t step_ = 0;
  int episode_ = 0;
  int episode_step_ = 0;
  double episode_reward_ = 0.0;
};

}  // namespace

CoverageRun run_coverage(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  Runner runner(config, seed);
  CoverageRun run;
  auto& rep = run.report;
  rep.bins = config.coverage_bins;
  rep.visits = Eigen::MatrixXi::Zero(rep.bins, rep.bins);
  if (config.coverage_steps > 0) runner.start_episode();
  for (std::uint64_t t = 0; t < config.coverage_steps; ++t) {
    const auto out = runner.step();
    const auto [pb, vb] = CoverageReport::bin_of(config.env, rep.bins, out.next_state.position, out.next_state.velocity);
    ++rep.visits(pb, vb);
    const bool truncated =
        config.coverage_episode_length > 0 && runner.episode_step() >= config.coverage_episode_length;
    const bool last = t + 1 == config.coverage_steps;
    if (out.terminated || truncated || last) {
      runner.finish_episode(out.terminated, out.reward);
      if (!last) runner.start_episode();
    }
    if ((t + 1) % config.coverage_checkpoint_every == 0 || last) {
      rep.checkpoints.push_back(t + 1);
      rep.fractions.push_back(coverage_fraction(rep.visits));
    }
  }
  rep.final_fraction = coverage_fraction(rep.visits);
  runner.close();
  run.log = std::move(runner.log);
  return run;
}

CoverageExperiment run_coverage_experiment(const ExperimentConfig& config) {
  CoverageExperiment exp;
  for (auto seed : config.coverage_seeds) {
    exp.runs.push_back(run_coverage(config, seed));
    const double f = exp.runs.back().report.final_fraction;
    if (exp.runs.size() == 1 || f > exp.best_fraction) {
      exp.best_fraction = f;
      exp.best = exp.runs.size() - 1;
    }
  }
  return exp;
}

RewardRun run_rewards(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  Runner runner(config, seed);
  RewardRun run;
  for (int e = 0; e < config.episodes; ++e) {
    runner.start_episode();
    bool terminated = false;
    double last_reward = 0.0;
    double total = 0.0;
    for (int t = 0; t < config.max_episode_steps && !terminated; ++t) {
      const auto out = runner.step();
      terminated = out.terminated;
      last_reward = out.reward;
      total += out.reward;
    }
    runner.finish_episode(terminated, last_reward);
    run.episode_rewards.push_back(total);
  }
  runner.close();
  run.log = std::move(runner.log);
  return run;
}

RewardExperiment run_reward_experiment(const ExperimentConfig& config) {
  RewardExperiment exp;
  for (auto seed : config.reward_seeds) exp.runs.push_back(run_rewards(config, seed));
  const auto n = static_cast<double>(exp.runs.size());
  for (int e = 0; e < config.episodes; ++e) {
    double sum = 0.0, sq = 0.0;
    for (const auto& r : exp.runs) {
      sum += r.episode_rewards[static_cast<std::size_t>(e)];
      sq += r.episode_rewards[static_cast<std::size_t>(e)] * r.episode_rewards[static_cast<std::size_t>(e)];
    }
    const double mean = n > 0 ? sum / n : 0.0;
    exp.mean.push_back(mean);
    exp.stddev.push_back(n > 0 ? std::sqrt(std::max(0.0, sq / n - mean * mean)) : 0.0);
  }
  return exp;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

void write_run_log(std::ostream& out, const RunLog& log) {
  for (const auto& s : log.steps)
    out << log.seed << ',' << s.episode << ',' << s.step << ',' << s.episode_step << ',' << fmt(s.position) << ','
        << fmt(s.velocity) << ',' << fmt(s.force) << ',' << s.mode << ',' << s.command << ','
        << trigger_name(s.trigger) << ',' << fmt(s.reward) << ',' << s.terminated << ',' << s.truncated << ','
        << s.refit << '\n';
}

json counters_json(const RunLog& log) {
  return {{"seed", log.seed},
          {"steps", log.counters.steps},
          {"planner_invocations", log.counters.planner_invocations},
          {"mode_change_events", log.counters.mode_change_events},
          {"forced_dwell_events", log.counters.forced_dwell_events},
          {"dirichlet_updates", log.counters.dirichlet_updates},
          {"refits", log.counters.refits},
          {"prior_computations", log.counters.prior_computations},
          {"logged_decisions", log.logged_decisions()},
          {"logged_mode_changes", log.logged_mode_changes()},
          {"logged_forced_dwells", log.logged_forced_dwells()},
          {"diagnostics", log.diagnostics.size()}};
}

}  // namespace

void emit_artifacts(const std::filesystem::path& out_dir, const ExperimentConfig& config,
                    const CoverageExperiment* coverage, const RewardExperiment* rewards) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "refit_snapshots", ec);
  if (ec) throw std::runtime_error("cannot create " + (out_dir / "refit_snapshots").string() + ": " + ec.message());

  const std::string hash = config.hash();
  std::vector<const RunLog*> logs;
  if (coverage)
    for (const auto& r : coverage->runs) logs.push_back(&r.log);
  if (rewards)
    for (const auto& r : rewards->runs) logs.push_back(&r.log);
  std::vector<std::uint64_t> seeds;
  for (const auto* l : logs) seeds.push_back(l->seed);
  const std::string banner = "# config_hash=" + hash + " seeds=" + seed_list(seeds) + "\n";

  {
    auto out = open_out(out_dir / "config.json");
    out << json{{"config_hash", hash}, {"seeds", seeds}, {"config", config.to_json()}}.dump(2) << '\n';
  }
  {
    auto out = open_out(out_dir / "run_log.csv");
    out << banner
        << "seed,episode,step,episode_step,position,velocity,force,mode,command,trigger,reward,terminated,truncated,"
           "refit\n";
    for (const auto* l : logs) write_run_log(out, *l);
  }
  {
    auto out = open_out(out_dir / "decisions.jsonl");
    for (const auto* l : logs)
      for (const auto& d : l->decisions) {
        json line = d;
        line["config_hash"] = hash;
        out << line.dump() << '\n';
      }
  }
  for (const auto* l : logs)
    for (const auto& snap : l->refit_snapshots) {
      json doc = snap;
      doc["config_hash"] = hash;
      const auto name = "seed" + std::to_string(l->seed) + "_refit" + std::to_string(snap.at("refit").get<int>()) + ".json";
      auto out = open_out(out_dir / "refit_snapshots" / name);
      out << doc.dump(1) << '\n';
    }
  {
    auto out = open_out(out_dir / "coverage.csv");
    std::vector<std::uint64_t> cov_seeds;
    if (coverage)
      for (const auto& r : coverage->runs) cov_seeds.push_back(r.log.seed);
    out << "# config_hash=" << hash << " seeds=" << seed_list(cov_seeds) << '\n' << "step";
    for (auto s : cov_seeds) out << ",seed_" << s;
    out << ",best\n";
    if (coverage && !coverage->runs.empty()) {
      const auto& ref = coverage->runs.front().report;
      for (std::size_t c = 0; c < ref.checkpoints.size(); ++c) {
        out << ref.checkpoints[c];
        for (const auto& r : coverage->runs) out << ',' << fmt(r.report.fractions[c]);
        out << ',' << fmt(coverage->runs[coverage->best].report.fractions[c]) << '\n';
      }
    }
  }
  {
    auto out = open_out(out_dir / "coverage_counts.csv");
    out << "# config_hash=" << hash << '\n' << "seed,position_bin,velocity_bin,visits,occupied\n";
    if (coverage)
      for (const auto& r : coverage->runs)
        for (int p = 0; p < r.report.bins; ++p)
          for (int v = 0; v < r.report.bins; ++v)
            out << r.log.seed << ',' << p << ',' << v << ',' << r.report.visits(p, v) << ','
                << (r.report.visits(p, v) > 0) << '\n';
  }
  {
    auto out = open_out(out_dir / "rewards.csv");
    std::vector<std::uint64_t> rew_seeds;
    if (rewards)
      for (const auto& r : rewards->runs) rew_seeds.push_back(r.log.seed);
    out << "# config_hash=" << hash << " seeds=" << seed_list(rew_seeds) << '\n' << "episode,mean,std";
    for (auto s : rew_seeds) out << ",seed_" << s;
    out << '\n';
    if (rewards)
      for (std::size_t e = 0; e < rewards->mean.size(); ++e) {
        out << e << ',' << fmt(rewards->mean[e]) << ',' << fmt(rewards->stddev[e]);
        for (const auto& r : rewards->runs) out << ',' << fmt(r.episode_rewards[e]);
        out << '\n';
      }
  }
  {
    json runs = json::array();
    for (const auto* l : logs) runs.push_back(counters_json(*l));
    json summary{{"config_hash", hash}, {"runs", runs}};
    if (coverage) {
      std::vector<double> finals;
      for (const auto& r : coverage->runs) finals.push_back(r.report.final_fraction);
      summary["coverage"] = {{"final_fractions", finals}, {"best_fraction", coverage->best_fraction}};
    }
    if (rewards) summary["rewards"] = {{"mean", rewards->mean}, {"std", rewards->stddev}};
    auto out = open_out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
}

}  // namespace hha::harness
