#pragma once

#include <cstdint>

namespace hha::env {

/// Continuous Mountain Car constants. Defaults follow the reference
/// environment except for the goal, which sits at the flag (0.5), and the
/// reward, which is sparse.
struct MountainCarConfig {
  double min_position = -1.2;
  double max_position = 0.6;
  double max_speed = 0.07;
  double min_action = -1.0;
  double max_action = 1.0;
  double power = 0.0015;
  double gravity = 0.0025;
  double goal_position = 0.5;
  double goal_reward = 100.0;
  /// Per-step penalty coefficient on force^2. Zero keeps the reward sparse.
  double control_penalty = 0.0;
  /// Reference behaviour: hitting the left wall kills leftward velocity.
  bool inelastic_left_wall = true;
  /// Spawn point; the default is the centre of the track coordinate.
  double start_position = 0.0;
  double start_velocity = 0.0;
};

struct EnvState {
  double position = 0.0;
  double velocity = 0.0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct EnvAction {
  double force = 0.0;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  bool terminated = false;
};

class MountainCar {
 public:
  static constexpr int kStateDim = 2;
  static constexpr int kControlDim = 1;

  MountainCar() = default;
  explicit MountainCar(MountainCarConfig config) : config_(config) {}

  const MountainCarConfig& config() const { return config_; }

  /// Spawn is deterministic; the seed is accepted for interface symmetry
  /// with stochastic environments.
  EnvState reset(std::uint64_t seed) const;

  /// Pure transition. Out-of-range forces are clamped, never rejected.
  StepOutcome step(const EnvState& state, EnvAction action) const;

  /// Clamps an arbitrary force into the admissible action interval.
  double clamp_force(double force) const;

 private:
  MountainCarConfig config_{};
};

}  // namespace hha::env
