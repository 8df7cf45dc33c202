#include "amorph/td3.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "amorph/errors.hpp"
#include "amorph/gradcheck.hpp"
#include "amorph/ops.hpp"

namespace amorph {

Adam::Adam(std::vector<Tensor<float>> params) : params_(std::move(params)) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void Adam::step(double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  // w -= lr * (m / c1) / (sqrt(v / c2) + eps), folded into two constants.
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float b1 = beta1, b2 = beta2, e = eps;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const float* g = p.grad().data();
    float* w = p.values_mut().data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t size = m_[k].size();
    for (std::size_t i = 0; i < size; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + e);
    }
  }
}

Agent make_agent(const PolicyConfig& policy, const Td3Config& td3, std::uint64_t seed) {
  std::mt19937_64 seeds(seed);
  Agent a;
  a.policy = policy;
  a.td3 = td3;
  a.actor = init_policy<float>(policy, NetRole::actor, seeds());
  a.critic1 = init_policy<float>(policy, NetRole::critic, seeds());
  a.critic2 = init_policy<float>(policy, NetRole::critic, seeds());
  a.actor_target = a.actor->clone();
  a.critic1_target = a.critic1->clone();
  a.critic2_target = a.critic2->clone();
  a.actor_opt = std::make_unique<Adam>(a.actor->parameters());
  auto critic_params = a.critic1->parameters();
  for (auto& p : a.critic2->parameters()) critic_params.push_back(p);
  a.critic_opt = std::make_unique<Adam>(std::move(critic_params));
  a.noise_rng.seed(seeds());
  return a;
}

namespace {

/// (graphs * nodes, 1) with 0 on each graph's root row and 1 elsewhere.
Tensor<float> root_mask(const MorphGraph& graph, std::size_t graphs) {
  const std::size_t n = graph.node_count();
  std::vector<float> m(graphs * n, 1.0f);
  for (std::size_t b = 0; b < graphs; ++b) m[b * n + graph.root()] = 0.0f;
  return Tensor<float>({graphs * n, 1}, std::move(m));
}

void set_trainable(const GraphNet<float>& net, bool on) {
  for (auto& p : net.parameters()) p.set_requires_grad(on);
}

Tensor<float> q_values(const GraphNet<float>& critic, const MorphGraph& graph, std::size_t graphs,
                       const Tensor<float>& obs, const Tensor<float>& actions) {
  return critic.forward(graph, graphs, ops::concat<float>({obs, actions}));
}

Tensor<float> squared_error(const Tensor<float>& pred, const Tensor<float>& target) {
  Tensor<float> d = ops::sub(pred, target);
  return ops::mean(ops::mul(d, d));
}

}  // namespace

std::vector<float> act(const GraphNet<float>& actor, const MorphGraph& graph, std::size_t graphs,
                       const std::vector<float>& obs) {
  NoGrad<float> off;
  const std::size_t n = graph.node_count();
  Tensor<float> x({graphs * n, actor.input_width()}, obs);
  Tensor<float> out = ops::mul(ops::tanh(actor.forward(graph, graphs, x)), root_mask(graph, graphs));
  return std::vector<float>(out.values().begin(), out.values().end());
}

LossReport td3_update(Agent& agent, const MorphGraph& graph, const Batch& batch) {
  const std::size_t n = graph.node_count();
  const std::size_t B = batch.size;
  if (batch.nodes != n) {
    throw DimensionError("td3_update: batch has " + std::to_string(batch.nodes) + " nodes, graph has " +
                         std::to_string(n));
  }
  if (B == 0) throw std::invalid_argument("td3_update: empty batch");
  const Td3Config& cfg = agent.td3;
  const std::size_t rows = B * n;
  const Tensor<float> obs({rows, kObsWidth}, batch.obs);
  const Tensor<float> next_obs({rows, kObsWidth}, batch.next_obs);
  const Tensor<float> actions({rows, 1}, batch.actions);
  const Tensor<float> mask = root_mask(graph, B);

  // Node-wise TD target with target policy smoothing.
  Tensor<float> target;
  {
    NoGrad<float> off;
    Tensor<float> next_action = ops::tanh(agent.actor_target->forward(graph, B, next_obs));
    std::normal_distribution<double> noise(0.0, cfg.target_noise);
    auto a = next_action.values_mut();
    for (std::size_t i = 0; i < rows; ++i) {
      const double eps = std::clamp(noise(agent.noise_rng), -cfg.noise_clip, cfg.noise_clip);
      a[i] = static_cast<float>(std::clamp(a[i] + eps, -1.0, 1.0));
    }
    next_action = ops::mul(next_action, mask);
    Tensor<float> q1 = q_values(*agent.critic1_target, graph, B, next_obs, next_action);
    Tensor<float> q2 = q_values(*agent.critic2_target, graph, B, next_obs, next_action);
    std::vector<float> y(rows);
    for (std::size_t b = 0; b < B; ++b) {
      const double bootstrap = cfg.gamma * (1.0 - batch.done[b]);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = b * n + i;
        y[r] = static_cast<float>(batch.rewards[b] + bootstrap * std::min(q1[r], q2[r]));
      }
    }
    target = Tensor<float>({rows, 1}, std::move(y));
  }

  LossReport report;
  auto critic_params = agent.critic1->parameters();
  for (auto& p : agent.critic2->parameters()) critic_params.push_back(p);
  {
    Tape<float> tape;
    Recording<float> on(tape);
    Tensor<float> l1 = squared_error(q_values(*agent.critic1, graph, B, obs, actions), target);
    Tensor<float> l2 = squared_error(q_values(*agent.critic2, graph, B, obs, actions), target);
    report.critic1 = l1.item();
    report.critic2 = l2.item();
    zero_grads(critic_params);
    tape.backward(ops::add(l1, l2));
  }
  report.critic_grad_norm = clip_grad_norm(critic_params, cfg.grad_clip);
  agent.critic_opt->step(cfg.learning_rate);
  ++agent.critic_updates;

  if (agent.critic_updates % cfg.policy_delay == 0) {
    auto actor_params = agent.actor->parameters();
    set_trainable(*agent.critic1, false);
    {
      Tape<float> tape;
      Recording<float> on(tape);
      Tensor<float> a = ops::mul(ops::tanh(agent.actor->forward(graph, B, obs)), mask);
      Tensor<float> loss = ops::scale(ops::mean(q_values(*agent.critic1, graph, B, obs, a)), -1.0f);
      report.actor = loss.item();
      zero_grads(actor_params);
      tape.backward(loss);
    }
    set_trainable(*agent.critic1, true);
    report.actor_grad_norm = clip_grad_norm(actor_params, cfg.grad_clip);
    agent.actor_opt->step(cfg.learning_rate);
    report.actor_updated = true;

    soft_update(*agent.actor, *agent.actor_target, cfg.tau);
    soft_update(*agent.critic1, *agent.critic1_target, cfg.tau);
    soft_update(*agent.critic2, *agent.critic2_target, cfg.tau);
  }
  return report;
}

LossReport td3_update(Agent& agent, const MorphGraph& graph, const std::vector<Transition>& batch) {
  return td3_update(agent, graph, make_batch(batch));
}

}  // namespace amorph
