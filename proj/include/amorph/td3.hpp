#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "amorph/graph.hpp"
#include "amorph/policies.hpp"
#include "amorph/replay.hpp"

namespace amorph {

struct Td3Config {
  double learning_rate = 1e-4;
  double grad_clip = 0.1;
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t policy_delay = 2;
  double target_noise = 0.2;
  double noise_clip = 0.5;
  double exploration_noise = 0.1;
};

/// Adam over a fixed parameter list (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(std::vector<Tensor<float>> params);
  /// Applies one update from the current gradients. A zero learning rate
  /// leaves parameters bit-identical.
  void step(double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

/// Actor, twin critics and their targets. Targets start as exact copies.
struct Agent {
  PolicyConfig policy;
  Td3Config td3;
  std::unique_ptr<GraphNet<float>> actor, actor_target;
  std::unique_ptr<GraphNet<float>> critic1, critic1_target;
  std::unique_ptr<GraphNet<float>> critic2, critic2_target;
  std::unique_ptr<Adam> actor_opt, critic_opt;
  std::mt19937_64 noise_rng;
  std::size_t critic_updates = 0;
};

Agent make_agent(const PolicyConfig& policy, const Td3Config& td3, std::uint64_t seed);

struct LossReport {
  double critic1 = 0.0;  // mean squared TD error over every (transition, node)
  double critic2 = 0.0;
  bool actor_updated = false;
  double actor = 0.0;    // -mean over nodes of critic 1
  double critic_grad_norm = 0.0;
  double actor_grad_norm = 0.0;
};

/// One TD3 step on a single-task batch. `graph` is the topology the policies
/// see for that task (its node count must match the batch).
LossReport td3_update(Agent& agent, const MorphGraph& graph, const Batch& batch);

/// Same, from raw transitions; throws std::invalid_argument on a mixed-task batch.
LossReport td3_update(Agent& agent, const MorphGraph& graph, const std::vector<Transition>& batch);

/// Deterministic actions for `graphs` stacked observations of one task, one
/// value per node in [-1, 1], the root entry forced to 0.
std::vector<float> act(const GraphNet<float>& actor, const MorphGraph& graph, std::size_t graphs,
                       const std::vector<float>& obs);

}  // namespace amorph
