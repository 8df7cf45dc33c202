#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "amorph/graph.hpp"
#include "amorph/tensor.hpp"

namespace amorph {

/// Width of every node observation row, shared by all tasks.
inline constexpr std::size_t kObsWidth = 12;

enum class Archetype { chain_walker, chain_hopper };

std::string_view to_string(Archetype a);
Archetype parse_archetype(std::string_view name);

/// Planar chain standing on a skid that slides along the ground.
///
/// Segment s (0 = bottom) runs from point mass p_s to p_{s+1}; p_0 is the skid
/// on the ground and p_n the torso. Joint s sits at p_s and drives segment s
/// relative to segment s-1 (or the ground). The skid slides with direction
/// dependent viscous friction, so leg swings can push the body forward.
struct PhysicsParams {
  double segment_length = 0.25;      // m
  double link_mass = 0.1;            // kg, intermediate point masses
  double torso_mass = 0.25;          // kg
  double skid_mass = 1.0;            // kg
  double gravity = 9.81;             // m/s^2
  double joint_damping = 0.1;        // N m s / rad
  double friction_forward = 0.5;     // N s / m, skid moving +x
  double friction_backward = 5.0;    // N s / m, skid moving -x
  double max_joint_speed = 10.0;     // rad/s
  double max_base_speed = 10.0;      // m/s
  double fall_height_fraction = 0.6; // episode ends when torso drops below this share of full height
  std::size_t substeps = 10;         // integrator substeps per control step

  /// No joint damping and no skid friction: total mechanical energy is conserved.
  static PhysicsParams undamped();
};

struct EnvSpec {
  Archetype archetype = Archetype::chain_walker;
  std::size_t n_links = 2;
  std::size_t episode_length = 400;
  double timestep = 0.02;  // s per control step
  double torque_limit = 1.0;  // N m
  double gamma = 0.99;
  PhysicsParams physics;

  std::size_t node_count() const { return n_links + 1; }
  std::size_t dim_state() const;
  std::size_t dim_action() const { return n_links; }
  std::string name() const;
  MorphGraph morphology() const { return build_chain_morphology(n_links); }
};

/// Two tasks are incompatible iff their state or action dimensions differ.
bool incompatible(const EnvSpec& a, const EnvSpec& b);

EnvSpec make_env(Archetype archetype, std::size_t n_links);
/// "chain-walker:3" style task names.
EnvSpec parse_task(std::string_view name);
std::vector<EnvSpec> parse_task_list(std::string_view comma_separated);

struct EnvState {
  std::vector<double> joint_angle;     // rad, relative, wrapped to (-pi, pi]; index = joint (0 = bottom)
  std::vector<double> joint_velocity;  // rad/s, clipped to +-max_joint_speed
  double base_x = 0.0;
  double base_velocity = 0.0;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  bool fallen = false;
};

/// Per-node observation rows, kObsWidth features each:
///   0-2 one-hot limb type (torso, link, end link), 3-4 position relative to
///   the torso, 5-6 linear velocity, 7-8 sin/cos of the joint angle, 9 joint
///   angular velocity, 10 joint angle scaled to [0,1] over (-pi, pi],
///   11 alive flag. Torso rows carry zeros in 7-10 (it has no joint).
struct NodeFeatureMatrix {
  std::size_t nodes = 0;
  std::vector<double> data;

  double operator()(std::size_t node, std::size_t feature) const;
  template <typename T>
  Tensor<T> as_tensor() const;
};

namespace feature {
inline constexpr std::size_t torso = 0, link = 1, end_link = 2, rel_x = 3, rel_y = 4, vel_x = 5, vel_y = 6,
                             sin_angle = 7, cos_angle = 8, angular_velocity = 9, angle_unit = 10, alive = 11;
}

/// Joint driven by node k (k >= 1); the torso (node 0) has none.
std::size_t joint_of_node(const EnvSpec& spec, std::size_t node);

struct ResetResult {
  EnvState state;
  NodeFeatureMatrix obs;
};

/// Joint angles uniform in +-0.1 rad (exactly upright when `perturb` is false),
/// zero velocities.
ResetResult reset(const EnvSpec& spec, std::uint64_t seed, bool perturb = true);

struct StepResult {
  EnvState state;
  NodeFeatureMatrix obs;
  double reward = 0.0;
  bool done = false;    // fell or reached the episode length
  bool fell = false;    // terminal in the MDP sense
};

/// `actions` has one entry per node; entry 0 (torso) is ignored, the rest are
/// clamped to [-1, 1] and scaled by the torque limit.
StepResult step(const EnvSpec& spec, const EnvState& state, const std::vector<double>& actions);

NodeFeatureMatrix observe(const EnvSpec& spec, const EnvState& state);

double torso_height(const EnvSpec& spec, const EnvState& state);
double upright_height(const EnvSpec& spec);

struct ReturnStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> returns;
};

/// Mean and standard error of the mean; stderr is 0 for a single sample.
ReturnStats summarize_returns(std::vector<double> returns);

/// Uniform random actions in [-1, 1]; deterministic in `seed`.
ReturnStats random_policy_baseline(const EnvSpec& spec, std::size_t episodes, std::uint64_t seed);

/// CSV rows "step,node,f0..f11,action,reward,done", one per node and step.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(const std::filesystem::path& path);
  void write(std::size_t step, const NodeFeatureMatrix& obs, const std::vector<double>& actions, double reward,
             bool done);

 private:
  std::ofstream out_;
};

}  // namespace amorph
