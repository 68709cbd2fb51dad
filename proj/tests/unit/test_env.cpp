#include "hha/env.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hha::env;

TEST_CASE("reset spawns at the centre regardless of seed") {
  MountainCar car;
  CHECK(car.reset(0) == EnvState{0.0, 0.0});
  CHECK(car.reset(7) == EnvState{0.0, 0.0});
  CHECK(car.reset(3) == car.reset(123456));
}

TEST_CASE("single step matches the reference dynamics") {
  MountainCar car;
  const auto out = car.step({0.0, 0.0}, {0.0});
  CHECK(out.next_state.velocity == doctest::Approx(-0.0025).epsilon(1e-12));
  CHECK(out.next_state.position == doctest::Approx(-0.0025).epsilon(1e-12));
  CHECK_FALSE(out.terminated);
  CHECK(out.reward == 0.0);
}

TEST_CASE("zero gravity and zero force leave the origin fixed") {
  MountainCarConfig cfg;
  cfg.gravity = 0.0;
  MountainCar car(cfg);
  CHECK(car.step({0.0, 0.0}, {0.0}).next_state == EnvState{0.0, 0.0});
}

TEST_CASE("reaching the flag terminates with the goal reward") {
  MountainCar car;
  const auto out = car.step({0.49, 0.07}, {1.0});
  CHECK(out.terminated);
  CHECK(out.reward == 100.0);
  CHECK(out.next_state.position >= 0.5);
}

TEST_CASE("state bounds hold under arbitrary forces") {
  MountainCar car;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> force(-50.0, 50.0);
  auto s = car.reset(0);
  for (int t = 0; t < 20000; ++t) {
    const auto out = car.step(s, {force(rng)});
    s = out.next_state;
    REQUIRE(s.position >= -1.2);
    REQUIRE(s.position <= 0.6);
    REQUIRE(std::abs(s.velocity) <= 0.07);
    REQUIRE((out.reward > 0.0) == out.terminated);
    if (out.terminated) s = car.reset(0);
  }
}

TEST_CASE("out-of-range forces are clamped") {
  MountainCar car;
  CHECK(car.clamp_force(5.0) == 1.0);
  CHECK(car.clamp_force(-5.0) == -1.0);
  CHECK(car.step({-0.3, 0.01}, {9.0}).next_state == car.step({-0.3, 0.01}, {1.0}).next_state);
}

TEST_CASE("step is a pure function") {
  MountainCar car;
  const EnvState s{-0.4, 0.02};
  const auto a = car.step(s, {0.3});
  const auto b = car.step(s, {0.3});
  CHECK(a.next_state == b.next_state);
  CHECK(a.reward == b.reward);
}

TEST_CASE("without control the car never escapes the valley") {
  MountainCar car;
  auto s = car.reset(0);
  for (int t = 0; t < 10000; ++t) {
    const auto out = car.step(s, {0.0});
    REQUIRE_FALSE(out.terminated);
    s = out.next_state;
  }
}

TEST_CASE("left wall is inelastic") {
  MountainCar car;
  const auto out = car.step({-1.19, -0.05}, {-1.0});
  CHECK(out.next_state.position == -1.2);
  CHECK(out.next_state.velocity == 0.0);
}
