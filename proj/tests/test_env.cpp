#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "amorph/env.hpp"
#include "amorph/errors.hpp"

using namespace amorph;

namespace {

// Mechanical energy from the chain geometry, written out independently of the
// simulator: skid at (x, 0), segment s at absolute angle sum(q_0..q_s) from
// vertical, point masses at the segment ends.
double chain_energy(const EnvSpec& spec, const EnvState& s) {
  const auto& p = spec.physics;
  const std::size_t n = spec.n_links;
  double x = s.base_x, y = 0.0, vx = s.base_velocity, vy = 0.0;
  double e = 0.5 * p.skid_mass * vx * vx;
  double phi = 0.0, omega = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    phi += s.joint_angle[j];
    omega += s.joint_velocity[j];
    x += p.segment_length * std::sin(phi);
    y += p.segment_length * std::cos(phi);
    vx += p.segment_length * omega * std::cos(phi);
    vy -= p.segment_length * omega * std::sin(phi);
    const double m = j + 1 == n ? p.torso_mass : p.link_mass;
    e += 0.5 * m * (vx * vx + vy * vy) + m * p.gravity * y;
  }
  (void)x;
  return e;
}

bool same_state(const EnvState& a, const EnvState& b) {
  return a.joint_angle == b.joint_angle && a.joint_velocity == b.joint_velocity && a.base_x == b.base_x &&
         a.base_velocity == b.base_velocity && a.step == b.step && a.fallen == b.fallen;
}

}  // namespace

TEST_CASE("make_env examples") {
  const EnvSpec w2 = make_env(Archetype::chain_walker, 2);
  CHECK(w2.dim_action() == 2);
  CHECK(w2.node_count() == 3);
  CHECK(w2.dim_state() == 3 * kObsWidth);
  CHECK(w2.episode_length == 400);
  CHECK(w2.timestep == 0.02);
  CHECK(w2.torque_limit == 1.0);
  CHECK(incompatible(make_env(Archetype::chain_walker, 5), make_env(Archetype::chain_walker, 3)));
  CHECK_FALSE(incompatible(make_env(Archetype::chain_walker, 3), make_env(Archetype::chain_hopper, 3)));
  CHECK(make_env(Archetype::chain_hopper, 4).node_count() == 5);
  CHECK_THROWS_AS(make_env(Archetype::chain_walker, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_env(Archetype::chain_walker, 11), std::invalid_argument);
  CHECK(parse_task("chain-hopper:7").n_links == 7);
  CHECK(parse_task("chain-walker:3").name() == "chain-walker:3");
  CHECK_THROWS(parse_task("chain-walker"));
  CHECK_THROWS(parse_task("chain-walker:3x"));
  CHECK_THROWS(parse_task("snake:3"));
  CHECK(parse_task_list("chain-walker:2, chain-walker:3").size() == 2);
}

TEST_CASE("reset") {
  const EnvSpec spec = make_env(Archetype::chain_walker, 4);
  const ResetResult a = reset(spec, 42), b = reset(spec, 42), c = reset(spec, 43);
  CHECK(same_state(a.state, b.state));
  CHECK(a.obs.data == b.obs.data);
  CHECK(a.state.joint_angle != c.state.joint_angle);
  CHECK(a.state.step == 0);

  const ResetResult upright = reset(spec, 42, false);
  for (double q : upright.state.joint_angle) CHECK(q == 0.0);
  CHECK(torso_height(spec, upright.state) == doctest::Approx(upright_height(spec)));

  double lo = 1.0, hi = -1.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ResetResult r = reset(spec, seed);
    for (double q : r.state.joint_angle) {
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    for (double v : r.state.joint_velocity) CHECK(v == 0.0);
  }
  CHECK(lo >= -0.1);
  CHECK(hi <= 0.1);
  // 4000 draws: both ends of the range get close.
  CHECK(lo < -0.099);
  CHECK(hi > 0.099);
}

TEST_CASE("reward examples") {
  const EnvSpec spec = make_env(Archetype::chain_walker, 3);
  const ResetResult rest = reset(spec, 0, false);
  const StepResult r = step(spec, rest.state, std::vector<double>(4, 0.0));
  CHECK(r.reward == 1.0);
  CHECK_FALSE(r.done);

  // Torques switched off in the plant: actions at +-1 cannot move the chain,
  // so the reward is the alive bonus minus the action penalty.
  EnvSpec still = spec;
  still.torque_limit = 0.0;
  const StepResult pen = step(still, rest.state, {1.0, 1.0, -1.0, 1.0});
  CHECK(pen.state.base_x == 0.0);
  CHECK(pen.reward == doctest::Approx(1.0 - 0.05 * 3.0).epsilon(1e-15));

  // With torques on, the reward decomposes into alive + forward - penalty.
  const StepResult moved = step(spec, rest.state, {0.0, 0.5, -0.25, 1.0});
  const double fwd = (moved.state.base_x - rest.state.base_x) / spec.timestep;
  CHECK(moved.reward == doctest::Approx(1.0 + 0.5 * fwd - 0.05 * (0.25 + 0.0625 + 1.0)).epsilon(1e-12));
  // Out-of-range actions are clamped before the penalty.
  const StepResult clamped = step(still, rest.state, {0.0, 5.0, 0.0, 0.0});
  CHECK(clamped.reward == doctest::Approx(0.95));

  CHECK_THROWS_AS(step(spec, rest.state, {0.0, std::nan(""), 0.0, 0.0}), NumericError);
  CHECK_THROWS_AS(step(spec, rest.state, {0.0, 0.0}), DimensionError);

  const EnvSpec hop = make_env(Archetype::chain_hopper, 3);
  CHECK(step(hop, rest.state, std::vector<double>(4, 0.0)).reward == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("undamped zero-torque chain conserves energy") {
  for (std::size_t n : {1u, 2u, 3u}) {
    CAPTURE(n);
    EnvSpec spec = make_env(Archetype::chain_walker, n);
    spec.physics = PhysicsParams::undamped();
    EnvState s = reset(spec, 0, false).state;
    // Hanging below the skid and swinging, so speeds stay well inside the clips.
    s.joint_angle[0] = std::numbers::pi - 0.4;
    for (std::size_t j = 1; j < n; ++j) s.joint_angle[j] = 0.1 * static_cast<double>(j);
    const double e0 = chain_energy(spec, s);
    double worst = 0.0, max_speed = 0.0;
    for (int t = 0; t < 200; ++t) {
      s = step(spec, s, std::vector<double>(n + 1, 0.0)).state;
      worst = std::max(worst, std::abs(chain_energy(spec, s) - e0));
      for (double v : s.joint_velocity) max_speed = std::max(max_speed, std::abs(v));
    }
    CHECK(max_speed < spec.physics.max_joint_speed);
    CHECK(worst <= 0.01 * std::abs(e0));
  }
}

TEST_CASE("observation layout") {
  const EnvSpec spec = make_env(Archetype::chain_walker, 2);
  const ResetResult rest = reset(spec, 0, false);
  for (std::size_t node = 0; node < 3; ++node) {
    for (auto f : {feature::vel_x, feature::vel_y, feature::angular_velocity}) CHECK(rest.obs(node, f) == 0.0);
    CHECK(rest.obs(node, feature::alive) == 1.0);
  }
  CHECK(rest.obs(0, feature::rel_x) == 0.0);
  CHECK(rest.obs(0, feature::rel_y) == 0.0);
  CHECK(rest.obs(0, feature::torso) == 1.0);
  CHECK(rest.obs(1, feature::link) == 1.0);
  CHECK(rest.obs(2, feature::end_link) == 1.0);
  CHECK(rest.obs(1, feature::angle_unit) == 0.5);

  EnvState s = rest.state;
  s.joint_angle = {0.2, -0.1};
  s.joint_velocity = {0.5, -0.3};
  s.base_x = 1.0;
  s.base_velocity = 0.2;
  const NodeFeatureMatrix obs = observe(spec, s);
  // Node 1 sits on the upper joint (joint 1): by hand with l = 0.25,
  // absolute angles 0.2 and 0.1, absolute rates 0.5 and 0.2.
  const double l = 0.25;
  const double expected[kObsWidth] = {0.0,
                                      1.0,
                                      0.0,
                                      -l * std::sin(0.1),
                                      -l * std::cos(0.1),
                                      0.2 + l * 0.5 * std::cos(0.2),
                                      -l * 0.5 * std::sin(0.2),
                                      std::sin(-0.1),
                                      std::cos(-0.1),
                                      -0.3,
                                      (std::numbers::pi - 0.1) / (2.0 * std::numbers::pi),
                                      1.0};
  for (std::size_t f = 0; f < kObsWidth; ++f) {
    CAPTURE(f);
    CHECK(obs(1, f) == doctest::Approx(expected[f]).epsilon(1e-14));
  }
  for (std::size_t f = feature::sin_angle; f <= feature::angle_unit; ++f) CHECK(obs(0, f) == 0.0);
  CHECK(joint_of_node(spec, 1) == 1);
  CHECK(joint_of_node(spec, 2) == 0);
  CHECK_THROWS(joint_of_node(spec, 0));
}

TEST_CASE("falling ends the episode") {
  const EnvSpec spec = make_env(Archetype::chain_walker, 2);
  EnvState s = reset(spec, 0, false).state;
  s.joint_angle = {1.2, 0.3};
  const StepResult r = step(spec, s, {0.0, 0.0, 0.0});
  CHECK(r.fell);
  CHECK(r.done);
  CHECK(r.obs(0, feature::alive) == 0.0);

  EnvSpec short_spec = spec;
  short_spec.episode_length = 3;
  EnvState t = reset(short_spec, 1).state;
  StepResult last;
  for (int i = 0; i < 3; ++i) {
    last = step(short_spec, t, {0.0, 0.0, 0.0});
    t = last.state;
  }
  CHECK(last.done);
  CHECK_FALSE(last.fell);
}

TEST_CASE("trajectories are deterministic and finite") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1u, 4u, 8u}) {
    for (Archetype arch : {Archetype::chain_walker, Archetype::chain_hopper}) {
      const EnvSpec spec = make_env(arch, n);
      std::vector<std::vector<double>> actions(150, std::vector<double>(n + 1));
      for (auto& a : actions)
        for (auto& v : a) v = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
      auto run = [&] {
        std::vector<double> trace;
        EnvState s = reset(spec, 77).state;
        for (const auto& a : actions) {
          const StepResult r = step(spec, s, a);
          s = r.state;
          trace.insert(trace.end(), r.obs.data.begin(), r.obs.data.end());
          trace.push_back(r.reward);
          for (double q : s.joint_angle) {
            CHECK(q > -std::numbers::pi);
            CHECK(q <= std::numbers::pi);
          }
          for (double v : s.joint_velocity) CHECK(std::abs(v) <= spec.physics.max_joint_speed);
        }
        return trace;
      };
      const auto a = run(), b = run();
      REQUIRE(a.size() == b.size());
      CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
      for (double v : a) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("random policy baseline") {
  const EnvSpec spec = make_env(Archetype::chain_walker, 2);
  const ReturnStats one = random_policy_baseline(spec, 1, 9);
  CHECK(one.std_error == 0.0);
  CHECK(random_policy_baseline(spec, 1, 9).mean == one.mean);
  CHECK_THROWS_AS(random_policy_baseline(spec, 0, 9), std::invalid_argument);

  std::ifstream golden(std::string(AMORPH_FIXTURES) + "/baseline.golden");
  std::string line;
  int rows = 0;
  while (std::getline(golden, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string task;
    std::size_t episodes = 0;
    std::uint64_t seed = 0;
    double mean = 0, stderr_ = 0;
    ls >> task >> episodes >> seed >> mean >> stderr_;
    const ReturnStats s = random_policy_baseline(parse_task(task), episodes, seed);
    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.std_error == doctest::Approx(stderr_).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows == 2);

  const ReturnStats st = summarize_returns({1.0, 2.0, 3.0, 4.0});
  CHECK(st.mean == 2.5);
  CHECK(st.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}
