#include "hha/env.hpp"

#include <algorithm>
#include <cmath>

namespace hha::env {

EnvState MountainCar::reset(std::uint64_t /*seed*/) const {
  return {config_.start_position, config_.start_velocity};
}

double MountainCar::clamp_force(double force) const {
  if (std::isnan(force)) return 0.0;
  return std::clamp(force, config_.min_action, config_.max_action);
}

StepOutcome MountainCar::step(const EnvState& state, EnvAction action) const {
  const double force = clamp_force(action.force);
  const auto& c = config_;

  double velocity = state.velocity + force * c.power - c.gravity * std::cos(3.0 * state.position);
  velocity = std::clamp(velocity, -c.max_speed, c.max_speed);
  double position = std::clamp(state.position + velocity, c.min_position, c.max_position);
  if (c.inelastic_left_wall && position <= c.min_position && velocity < 0.0) velocity = 0.0;

  StepOutcome out;
  out.next_state = {position, velocity};
  out.terminated = position >= c.goal_position;
  out.reward = out.terminated ? c.goal_reward : 0.0;
  out.reward -= c.control_penalty * force * force;
  return out;
}

}  // namespace hha::env
