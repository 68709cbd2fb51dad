#include "hha/agent.hpp"

#include "hha/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hha::agent {

nlohmann::json ModelBundle::to_json() const {
  nlohmann::json prior_json = nlohmann::json::array();
  for (const auto& p : priors) prior_json.push_back(p ? p->to_json() : nlohmann::json(nullptr));
  return {{"params", rslds::to_json(params)},
          {"adjacency", adjacency.adjacency.to_json()},
          {"empty_regions", adjacency.empty_regions},
          {"adjacency_diagnostics", adjacency.diagnostics},
          {"priors", prior_json},
          {"lqr", cache.to_json()},
          {"fit_warnings", fit_warnings}};
}

std::vector<Mode> match_labels(const std::vector<Mode>& old_labels, const std::vector<Mode>& new_labels, int K_old,
                               int K_new) {
  require(old_labels.size() == new_labels.size(), "match_labels: label sequences differ in length");
  Mat overlap = Mat::Zero(K_old, K_new);
  for (std::size_t t = 0; t < old_labels.size(); ++t) {
    const Mode a = old_labels[t];
    const Mode b = new_labels[t];
    if (a >= 0 && a < K_old && b >= 0 && b < K_new) overlap(a, b) += 1.0;
  }
  std::vector<Mode> mapping(static_cast<std::size_t>(K_old), kNoMode);
  std::vector<bool> taken(static_cast<std::size_t>(K_new), false);
  for (int round = 0; round < std::min(K_old, K_new); ++round) {
    double best = 0.0;
    Mode bi = kNoMode, bj = kNoMode;
    for (Mode i = 0; i < K_old; ++i) {
      if (mapping[static_cast<std::size_t>(i)] != kNoMode) continue;
      for (Mode j = 0; j < K_new; ++j)
        if (!taken[static_cast<std::size_t>(j)] && overlap(i, j) > best) {
          best = overlap(i, j);
          bi = i;
          bj = j;
        }
    }
    if (bi == kNoMode) break;
    mapping[static_cast<std::size_t>(bi)] = bj;
    taken[static_cast<std::size_t>(bj)] = true;
  }
  return mapping;
}

ModelBundle build_model(const rslds::TrajectoryBatch& batch, const AgentConfig& config,
                        const env::MountainCarConfig& env_config, const rslds::RsldsParams* previous,
                        std::mt19937_64& rng, std::uint64_t* prior_calls) {
  constexpr int M = env::MountainCar::kStateDim;
  constexpr int N = env::MountainCar::kControlDim;
  auto prior = rslds::MniwPrior::weakly_informative(M, N, config.iw_scale, config.column_precision);
  prior.recurrence_ridge = config.recurrence_ridge;

  ModelBundle bundle;
  rslds::FitConfig fit_config = config.fit;
  rslds::RsldsParams start;
  if (previous) {
    start = *previous;
    fit_config.em_iters = config.refit_em_iters;
  } else {
    auto init = rslds::initialize(batch, config.K, M, N, rng, config.init);
    start = std::move(init.params);
    bundle.fit_warnings = std::move(init.warnings);
    if (!config.fit.learn_emission) start.S = config.emission_variance * Mat::Identity(M, M);
    fit_config.em_iters = config.init_em_iters;
  }
  auto fitted = rslds::fit(start, prior, batch, fit_config);
  bundle.params = std::move(fitted.params);
  bundle.fit_warnings.insert(bundle.fit_warnings.end(), fitted.warnings.begin(), fitted.warnings.end());

  Vec lower(M + N), upper(M + N);
  lower << env_config.min_position, -env_config.max_speed, env_config.min_action;
  upper << env_config.max_position, env_config.max_speed, env_config.max_action;
  bundle.partition = partition::SoftmaxPartition::from_params(bundle.params, lower, upper);
  bundle.adjacency = partition::build_adjacency(bundle.partition, config.adjacency);

  // Smoothed states paired with the previous control, labelled by cell.
  std::size_t rows = 0;
  for (const auto& seq : batch.sequences) rows += static_cast<std::size_t>(seq.length() - 1);
  Mat points(static_cast<Eigen::Index>(rows), M + N);
  std::vector<Mode> labels;
  labels.reserve(rows);
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    const auto& mean = fitted.posterior.q_x[s].mean;
    for (Eigen::Index t = 1; t < seq.length(); ++t, ++row) {
      points.row(row) << mean.row(t), seq.u.row(t - 1);
      labels.push_back(bundle.partition.label(points.row(row).transpose()));
    }
  }
  bundle.priors = priors::compute_priors(bundle.partition, bundle.adjacency.empty_regions, points, labels, M,
                                         config.priors);
  if (prior_calls)
    for (const auto& p : bundle.priors)
      if (p) ++*prior_calls;

  std::vector<std::vector<Vec>> members(static_cast<std::size_t>(config.K));
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[static_cast<std::size_t>(labels[i])].push_back(points.row(static_cast<Eigen::Index>(i)).head(M).transpose());
  std::vector<Mat> region_states(static_cast<std::size_t>(config.K));
  for (std::size_t k = 0; k < members.size(); ++k) {
    region_states[k].resize(static_cast<Eigen::Index>(members[k].size()), M);
    for (std::size_t i = 0; i < members[k].size(); ++i)
      region_states[k].row(static_cast<Eigen::Index>(i)) = members[k][i].transpose();
  }
  bundle.cache = lqr::rebuild_cache(bundle.params, bundle.adjacency.adjacency, bundle.priors, region_states,
                                    config.lqr);
  return bundle;
}

HybridAgent::HybridAgent(AgentConfig config, env::MountainCarConfig env_config, std::uint64_t seed)
    : config_(std::move(config)), env_config_(env_config), rng_(seed) {
  require(config_.K >= 1 && config_.refit_interval >= 1 && config_.max_dwell >= 1, "HybridAgent: invalid config");
  reward_sum_.assign(static_cast<std::size_t>(config_.K), 0.0);
  mode_entries_.assign(static_cast<std::size_t>(config_.K), 0.0);
  u_prev_ = Vec::Zero(env::MountainCar::kControlDim);
}

void HybridAgent::begin_episode(const Vec& observation) {
  require(observation.size() == env::MountainCar::kStateDim, "begin_episode: observation size");
  episodes_.emplace_back();
  estimate_ = observation;
  estimate_cov_ = model_ ? model_->params.S : Mat::Zero(observation.size(), observation.size());
  u_prev_.setZero();
  mode_ = kNoMode;
  command_ = kNoMode;
  dwell_ = 0;
  command_step_ = 0;
}

Vec HybridAgent::reward_per_mode() const {
  Vec out = Vec::Zero(config_.K);
  for (int k = 0; k < config_.K; ++k)
    if (mode_entries_[static_cast<std::size_t>(k)] > 0.0)
      out(k) = reward_sum_[static_cast<std::size_t>(k)] / mode_entries_[static_cast<std::size_t>(k)];
  return out;
}

Mode HybridAgent::read_mode(const Vec& x, const Vec& u_prev) const {
  return planner::infer_discrete_state(rslds::transition_probs(model_->params, x, u_prev));
}

void HybridAgent::filter(const Vec& observation) {
  const auto& params = model_->params;
  if (mode_ == kNoMode) {
    estimate_ = observation;
    estimate_cov_ = params.S;
    return;
  }
  const auto& dyn = params.dynamics[static_cast<std::size_t>(mode_)];
  const Vec predicted = dyn.A * estimate_ + dyn.B * u_prev_ + dyn.b;
  const Mat P = dyn.A * estimate_cov_ * dyn.A.transpose() + dyn.Q;
  const Mat gain = (P + params.S).ldlt().solve(P).transpose();
  estimate_ = predicted + gain * (observation - predicted);
  estimate_cov_ = P - gain * P;
  estimate_cov_ = 0.5 * (estimate_cov_ + estimate_cov_.transpose());
}

double HybridAgent::control_force(Mode mode, Mode command, int step) {
  const auto& cache = model_->cache;
  const lqr::CacheEntry* entry = cache.find(mode, command);
  if (!entry) entry = cache.find(mode, mode);
  if (!entry) return 0.0;
  const Vec u = entry->solution.control(estimate_, step);
  return std::clamp(u(0), env_config_.min_action, env_config_.max_action);
}

void HybridAgent::replan(Mode mode, TickResult& result) {
  auto decision = planner::select_action(mdp_, mode, config_.planner, rng_);
  ++counters_.planner_invocations;
  command_ = decision.action;
  if (!model_->cache.find(mode, command_))
    result.diagnostics.push_back("no controller for (" + std::to_string(mode) + ", " + std::to_string(command_) +
                                 "); holding mode");
  dwell_ = 0;
  command_step_ = 0;
  result.decision = std::move(decision);
}

TickResult HybridAgent::tick(const Vec& observation) {
  require(!episodes_.empty(), "tick: begin_episode must be called first");
  require(observation.size() == env::MountainCar::kStateDim, "tick: observation size");
  TickResult result;
  double force = 0.0;
  if (!model_) {
    std::uniform_real_distribution<double> unif(env_config_.min_action, env_config_.max_action);
    force = unif(rng_);
    result.random_action = true;
  } else {
    filter(observation);
    const Mode m = read_mode(estimate_, u_prev_);
    result.previous_mode = mode_;
    if (m != mode_) {
      if (mode_ != kNoMode) {
        auto diag = planner::update_dirichlet(mdp_, mode_, command_, m);
        result.diagnostics.insert(result.diagnostics.end(), diag.begin(), diag.end());
        ++counters_.dirichlet_updates;
      }
      mode_entries_[static_cast<std::size_t>(m)] += 1.0;
      ++counters_.mode_change_events;
      result.trigger = Trigger::ModeChange;
      replan(m, result);
    } else if (dwell_ >= config_.max_dwell) {
      auto diag = planner::update_dirichlet(mdp_, mode_, command_, m);
      result.diagnostics.insert(result.diagnostics.end(), diag.begin(), diag.end());
      ++counters_.dirichlet_updates;
      ++counters_.forced_dwell_events;
      result.trigger = Trigger::ForcedDwell;
      replan(m, result);
    }
    mode_ = m;
    force = control_force(mode_, command_, command_step_);
    ++command_step_;
    ++dwell_;
    result.mode = mode_;
    result.command = command_;
  }
  result.force = force;

  auto& episode = episodes_.back();
  episode.y.push_back(observation);
  Vec u(env::MountainCar::kControlDim);
  u(0) = force;
  episode.u.push_back(u);
  u_prev_ = u;
  ++counters_.steps;
  ++steps_since_refit_;
  if (steps_since_refit_ >= static_cast<std::uint64_t>(config_.refit_interval)) {
    const auto event = refit_now();
    result.refit = true;
    result.diagnostics.insert(result.diagnostics.end(), event.diagnostics.begin(), event.diagnostics.end());
  }
  return result;
}

void HybridAgent::end_episode(const Vec& final_observation, double reward, bool terminated) {
  require(!episodes_.empty(), "end_episode: no active episode");
  auto& episode = episodes_.back();
  episode.y.push_back(final_observation);
  episode.u.push_back(Vec::Zero(env::MountainCar::kControlDim));
  if (model_ && mode_ != kNoMode) {
    filter(final_observation);
    const Mode m = read_mode(estimate_, u_prev_);
    if (terminated && m != mode_) {
      planner::update_dirichlet(mdp_, mode_, command_, m);
      ++counters_.dirichlet_updates;
      mode_entries_[static_cast<std::size_t>(m)] += 1.0;
    }
    if (reward != 0.0) {
      mode_entries_[static_cast<std::size_t>(m)] = std::max(mode_entries_[static_cast<std::size_t>(m)], 1.0);
      reward_sum_[static_cast<std::size_t>(m)] += reward;
      mdp_.preference = config_.planner.kappa * reward_per_mode();
    }
  }
  mode_ = kNoMode;
  command_ = kNoMode;
  dwell_ = 0;
  command_step_ = 0;
}

rslds::TrajectoryBatch HybridAgent::collect_batch() const {
  rslds::TrajectoryBatch batch;
  for (const auto& ep : episodes_) {
    if (ep.y.size() < 2) continue;
    rslds::Sequence seq;
    const auto T = static_cast<Eigen::Index>(ep.y.size());
    seq.y.resize(T, env::MountainCar::kStateDim);
    seq.u.resize(T, env::MountainCar::kControlDim);
    for (Eigen::Index t = 0; t < T; ++t) {
      seq.y.row(t) = ep.y[static_cast<std::size_t>(t)].transpose();
      seq.u.row(t) = ep.u[static_cast<std::size_t>(t)].transpose();
    }
    batch.sequences.push_back(std::move(seq));
  }
  return batch;
}

RefitEvent HybridAgent::refit_now() {
  RefitEvent event;
  event.index = static_cast<int>(refits_.size());
  event.step = counters_.steps;
  steps_since_refit_ = 0;
  const auto batch = collect_batch();

  ModelBundle bundle;
  try {
    require(!batch.sequences.empty(), "refit: no sequences of length >= 2");
    bundle = build_model(batch, config_, env_config_, model_ ? &model_->params : nullptr, rng_,
                         &counters_.prior_computations);
  } catch (const std::exception& e) {
    event.diagnostics.push_back(std::string("refit failed; keeping previous modules: ") + e.what());
    event.snapshot = {{"refit", event.index}, {"step", event.step}, {"success", false}};
    refits_.push_back(event);
    return event;
  }

  std::vector<double> counts;
  if (model_) {
    std::vector<Mode> old_labels, new_labels;
    for (const auto& seq : batch.sequences)
      for (Eigen::Index t = 1; t < seq.length(); ++t) {
        const Vec x = seq.y.row(t).transpose();
        const Vec u = seq.u.row(t - 1).transpose();
        old_labels.push_back(read_mode(x, u));
        new_labels.push_back(planner::infer_discrete_state(rslds::transition_probs(bundle.params, x, u)));
      }
    event.label_mapping = match_labels(old_labels, new_labels, config_.K, config_.K);
    counts = planner::remap_counts(mdp_.counts(), config_.K, event.label_mapping, config_.K);
    std::vector<double> rewards(static_cast<std::size_t>(config_.K), 0.0);
    std::vector<double> entries(static_cast<std::size_t>(config_.K), 0.0);
    for (int k = 0; k < config_.K; ++k) {
      const Mode to = event.label_mapping[static_cast<std::size_t>(k)];
      if (to == kNoMode) continue;
      rewards[static_cast<std::size_t>(to)] += reward_sum_[static_cast<std::size_t>(k)];
      entries[static_cast<std::size_t>(to)] += mode_entries_[static_cast<std::size_t>(k)];
    }
    reward_sum_ = std::move(rewards);
    mode_entries_ = std::move(entries);
  }

  model_ = std::move(bundle);
  mdp_ = planner::lift(model_->adjacency.adjacency, model_->cache.cost_matrix(config_.K), reward_per_mode(),
                       config_.planner);
  if (!counts.empty()) mdp_.set_counts(std::move(counts));
  mode_ = kNoMode;
  command_ = kNoMode;
  dwell_ = 0;
  command_step_ = 0;
  estimate_cov_ = model_->params.S;
  ++counters_.refits;

  event.success = true;
  event.snapshot = model_->to_json();
  event.snapshot["refit"] = event.index;
  event.snapshot["step"] = event.step;
  event.snapshot["success"] = true;
  event.snapshot["label_mapping"] = event.label_mapping;
  event.snapshot["planner"] = mdp_.to_json();
  event.snapshot["reward_per_mode"] = io::vector_to_json(reward_per_mode());
  refits_.push_back(event);
  return event;
}

std::string HybridAgent::module_fingerprint() const {
  if (!model_) return "none";
  return io::fnv1a_hex(model_->to_json().dump());
}

}  // namespace hha::agent
