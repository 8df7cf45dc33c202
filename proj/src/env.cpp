#include "amorph/env.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "amorph/errors.hpp"

namespace amorph {

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::chain_walker: return "chain-walker";
    case Archetype::chain_hopper: return "chain-hopper";
  }
  return "?";
}

Archetype parse_archetype(std::string_view name) {
  if (name == "chain-walker") return Archetype::chain_walker;
  if (name == "chain-hopper") return Archetype::chain_hopper;
  throw std::invalid_argument("unknown archetype '" + std::string(name) + "'");
}

PhysicsParams PhysicsParams::undamped() {
  PhysicsParams p;
  p.joint_damping = 0.0;
  p.friction_forward = 0.0;
  p.friction_backward = 0.0;
  return p;
}

std::size_t EnvSpec::dim_state() const { return node_count() * kObsWidth; }

std::string EnvSpec::name() const { return std::string(to_string(archetype)) + ":" + std::to_string(n_links); }

bool incompatible(const EnvSpec& a, const EnvSpec& b) {
  return a.dim_state() != b.dim_state() || a.dim_action() != b.dim_action();
}

EnvSpec make_env(Archetype archetype, std::size_t n_links) {
  if (n_links < 1 || n_links > 10) {
    throw std::invalid_argument("n_links must be in [1, 10], got " + std::to_string(n_links));
  }
  EnvSpec spec;
  spec.archetype = archetype;
  spec.n_links = n_links;
  return spec;
}

EnvSpec parse_task(std::string_view name) {
  const auto colon = name.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("task '" + std::string(name) + "' must look like chain-walker:3");
  }
  const std::string count(name.substr(colon + 1));
  std::size_t used = 0;
  unsigned long n = 0;
  try {
    n = std::stoul(count, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != count.size()) throw std::invalid_argument("bad link count in task '" + std::string(name) + "'");
  return make_env(parse_archetype(name.substr(0, colon)), n);
}

std::vector<EnvSpec> parse_task_list(std::string_view comma_separated) {
  std::vector<EnvSpec> tasks;
  std::stringstream ss{std::string(comma_separated)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) tasks.push_back(parse_task(item));
  }
  if (tasks.empty()) throw std::invalid_argument("empty task list");
  return tasks;
}

double NodeFeatureMatrix::operator()(std::size_t node, std::size_t f) const { return data[node * kObsWidth + f]; }

template <typename T>
Tensor<T> NodeFeatureMatrix::as_tensor() const {
  return Tensor<T>({nodes, kObsWidth}, std::vector<T>(data.begin(), data.end()));
}

template Tensor<float> NodeFeatureMatrix::as_tensor<float>() const;
template Tensor<double> NodeFeatureMatrix::as_tensor<double>() const;

std::size_t joint_of_node(const EnvSpec& spec, std::size_t node) {
  if (node == 0 || node > spec.n_links) throw std::invalid_argument("node " + std::to_string(node) + " has no joint");
  return spec.n_links - node;
}

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  r -= kPi;
  return r == -kPi ? kPi : r;
}

/// Point masses from the skid (index 0) up to the torso (index n).
std::vector<double> point_masses(const EnvSpec& spec) {
  const auto& p = spec.physics;
  std::vector<double> m(spec.n_links + 1, p.link_mass);
  m.front() = p.skid_mass;
  m.back() = p.torso_mass;
  return m;
}

struct Kinematics {
  std::vector<double> abs_angle, abs_rate;   // per segment
  std::vector<double> px, py, vx, vy;        // per point mass
};

Kinematics kinematics(const EnvSpec& spec, const EnvState& s) {
  const std::size_t n = spec.n_links;
  const double l = spec.physics.segment_length;
  Kinematics k;
  k.abs_angle.resize(n);
  k.abs_rate.resize(n);
  double phi = 0, rate = 0;
  for (std::size_t j = 0; j < n; ++j) {
    phi += s.joint_angle[j];
    rate += s.joint_velocity[j];
    k.abs_angle[j] = phi;
    k.abs_rate[j] = rate;
  }
  k.px = {s.base_x};
  k.py = {0.0};
  k.vx = {s.base_velocity};
  k.vy = {0.0};
  for (std::size_t j = 0; j < n; ++j) {
    k.px.push_back(k.px[j] + l * std::sin(k.abs_angle[j]));
    k.py.push_back(k.py[j] + l * std::cos(k.abs_angle[j]));
    k.vx.push_back(k.vx[j] + l * k.abs_rate[j] * std::cos(k.abs_angle[j]));
    k.vy.push_back(k.vy[j] - l * k.abs_rate[j] * std::sin(k.abs_angle[j]));
  }
  return k;
}

/// Generalised accelerations (base, then absolute segment angles) from the
/// Lagrangian of the chain: M(q) qdd = Q - c(q, qd) - dV/dq.
Eigen::VectorXd accelerations(const EnvSpec& spec, const std::vector<double>& phi, const std::vector<double>& phid,
                              double xd, const std::vector<double>& joint_torque) {
  const auto& p = spec.physics;
  const std::size_t n = spec.n_links;
  const double l = p.segment_length;
  const auto m = point_masses(spec);
  // mass carried above the bottom of segment s
  std::vector<double> above(n, 0.0);
  double acc = 0;
  for (std::size_t s = n; s-- > 0;) {
    acc += m[s + 1];
    above[s] = acc;
  }
  const double total = acc + m[0];

  Eigen::MatrixXd M(n + 1, n + 1);
  Eigen::VectorXd rhs(n + 1);
  M(0, 0) = total;
  const double friction = xd > 0 ? p.friction_forward : p.friction_backward;
  rhs(0) = -friction * xd;
  for (std::size_t s = 0; s < n; ++s) {
    M(0, s + 1) = M(s + 1, 0) = l * above[s] * std::cos(phi[s]);
    rhs(0) += l * above[s] * std::sin(phi[s]) * phid[s] * phid[s];
  }
  for (std::size_t s = 0; s < n; ++s) {
    double r = p.gravity * l * above[s] * std::sin(phi[s]);
    r += joint_torque[s] - (s + 1 < n ? joint_torque[s + 1] : 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double mu = above[std::max(s, t)];
      M(s + 1, t + 1) = l * l * mu * std::cos(phi[s] - phi[t]);
      r -= l * l * mu * std::sin(phi[s] - phi[t]) * phid[t] * phid[t];
    }
    rhs(s + 1) = r;
  }
  return M.ldlt().solve(rhs);
}

double reward_for(const EnvSpec& spec, const EnvState& before, const EnvState& after,
                  const std::vector<double>& applied) {
  double penalty = 0;
  for (double a : applied) penalty += a * a;
  const double forward = (after.base_x - before.base_x) / spec.timestep;
  double r = 1.0 + 0.5 * forward - 0.05 * penalty;
  if (spec.archetype == Archetype::chain_hopper) r += torso_height(spec, after) / upright_height(spec);
  return r;
}

}  // namespace

double upright_height(const EnvSpec& spec) { return spec.physics.segment_length * static_cast<double>(spec.n_links); }

double torso_height(const EnvSpec& spec, const EnvState& state) {
  double phi = 0, h = 0;
  for (double a : state.joint_angle) {
    phi += a;
    h += spec.physics.segment_length * std::cos(phi);
  }
  return h;
}

NodeFeatureMatrix observe(const EnvSpec& spec, const EnvState& state) {
  const std::size_t n = spec.n_links;
  const Kinematics k = kinematics(spec, state);
  NodeFeatureMatrix obs{n + 1, std::vector<double>((n + 1) * kObsWidth, 0.0)};
  const double alive = state.fallen ? 0.0 : 1.0;
  for (std::size_t node = 0; node <= n; ++node) {
    double* row = obs.data.data() + node * kObsWidth;
    const std::size_t mass = n - node;  // node 0 is the torso at the top
    row[node == 0 ? feature::torso : (node == n ? feature::end_link : feature::link)] = 1.0;
    row[feature::rel_x] = k.px[mass] - k.px[n];
    row[feature::rel_y] = k.py[mass] - k.py[n];
    row[feature::vel_x] = k.vx[mass];
    row[feature::vel_y] = k.vy[mass];
    if (node > 0) {
      const std::size_t j = joint_of_node(spec, node);
      row[feature::sin_angle] = std::sin(state.joint_angle[j]);
      row[feature::cos_angle] = std::cos(state.joint_angle[j]);
      row[feature::angular_velocity] = state.joint_velocity[j];
      row[feature::angle_unit] = (state.joint_angle[j] + kPi) / (2.0 * kPi);
    }
    row[feature::alive] = alive;
  }
  return obs;
}

ResetResult reset(const EnvSpec& spec, std::uint64_t seed, bool perturb) {
  EnvState s;
  s.seed = seed;
  s.joint_angle.assign(spec.n_links, 0.0);
  s.joint_velocity.assign(spec.n_links, 0.0);
  if (perturb) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    for (double& a : s.joint_angle) a = dist(rng);
  }
  NodeFeatureMatrix obs = observe(spec, s);
  return {std::move(s), std::move(obs)};
}

StepResult step(const EnvSpec& spec, const EnvState& state, const std::vector<double>& actions) {
  const std::size_t n = spec.n_links;
  if (actions.size() != n + 1) {
    throw DimensionError("step: expected " + std::to_string(n + 1) + " actions, got " + std::to_string(actions.size()));
  }
  std::vector<double> applied(n, 0.0);  // per node 1..n
  std::vector<double> torque(n, 0.0);   // per joint
  for (std::size_t node = 1; node <= n; ++node) {
    const double a = actions[node];
    if (!std::isfinite(a)) throw NumericError("step: non-finite action for node " + std::to_string(node));
    applied[node - 1] = std::clamp(a, -1.0, 1.0);
    torque[joint_of_node(spec, node)] = applied[node - 1] * spec.torque_limit;
  }

  const auto& p = spec.physics;
  EnvState next = state;
  const double h = spec.timestep / static_cast<double>(p.substeps);
  std::vector<double> phi(n), phid(n), tau(n);
  for (std::size_t sub = 0; sub < p.substeps; ++sub) {
    double a = 0, r = 0;
    for (std::size_t j = 0; j < n; ++j) {
      a += next.joint_angle[j];
      r += next.joint_velocity[j];
      phi[j] = a;
      phid[j] = r;
      tau[j] = torque[j] - p.joint_damping * next.joint_velocity[j];
    }
    const Eigen::VectorXd qdd = accelerations(spec, phi, phid, next.base_velocity, tau);
    // Semi-implicit Euler: velocities first, positions from the new velocities.
    next.base_velocity = std::clamp(next.base_velocity + h * qdd(0), -p.max_base_speed, p.max_base_speed);
    double previous = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double joint_acc = qdd(j + 1) - previous;
      previous = qdd(j + 1);
      next.joint_velocity[j] =
          std::clamp(next.joint_velocity[j] + h * joint_acc, -p.max_joint_speed, p.max_joint_speed);
    }
    next.base_x += h * next.base_velocity;
    for (std::size_t j = 0; j < n; ++j) next.joint_angle[j] = wrap_angle(next.joint_angle[j] + h * next.joint_velocity[j]);
  }
  next.step = state.step + 1;
  next.fallen = torso_height(spec, next) < p.fall_height_fraction * upright_height(spec);

  StepResult out;
  out.reward = reward_for(spec, state, next, applied);
  out.fell = next.fallen;
  out.done = next.fallen || next.step >= spec.episode_length;
  out.obs = observe(spec, next);
  out.state = std::move(next);
  return out;
}

ReturnStats summarize_returns(std::vector<double> returns) {
  ReturnStats stats;
  const double count = static_cast<double>(returns.size());
  if (returns.empty()) return stats;
  for (double r : returns) stats.mean += r;
  stats.mean /= count;
  if (returns.size() > 1) {
    double ss = 0;
    for (double r : returns) ss += (r - stats.mean) * (r - stats.mean);
    stats.std_error = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  }
  stats.returns = std::move(returns);
  return stats;
}

ReturnStats random_policy_baseline(const EnvSpec& spec, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw std::invalid_argument("random_policy_baseline needs at least one episode");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> returns;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto [state, obs] = reset(spec, rng());
    double total = 0;
    std::vector<double> actions(spec.node_count(), 0.0);
    for (;;) {
      for (std::size_t k = 1; k < actions.size(); ++k) actions[k] = dist(rng);
      StepResult r = step(spec, state, actions);
      total += r.reward;
      state = std::move(r.state);
      if (r.done) break;
    }
    returns.push_back(total);
  }
  return summarize_returns(std::move(returns));
}

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path);
  if (!out_) throw std::runtime_error("cannot write trajectory file " + path.string());
  out_ << "step,node";
  for (std::size_t f = 0; f < kObsWidth; ++f) out_ << ",f" << f;
  out_ << ",action,reward,done\n";
  out_.precision(17);
}

void TrajectoryWriter::write(std::size_t step_index, const NodeFeatureMatrix& obs, const std::vector<double>& actions,
                             double reward, bool done) {
  for (std::size_t node = 0; node < obs.nodes; ++node) {
    out_ << step_index << "," << node;
    for (std::size_t f = 0; f < kObsWidth; ++f) out_ << "," << obs(node, f);
    out_ << "," << (node < actions.size() ? actions[node] : 0.0) << "," << reward << "," << (done ? 1 : 0) << "\n";
  }
}

}  // namespace amorph
