#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "amorph/env.hpp"
#include "amorph/graph.hpp"
#include "amorph/nn.hpp"
#include "amorph/tensor.hpp"

namespace amorph {

enum class Arch { amorpheus, nervenet, smp };

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);

/// Whether a policy family can run on non-tree graphs.
bool accepts_topology(Arch arch, TopologyScheme scheme);

enum class NetRole { actor, critic };

struct PolicyConfig {
  Arch arch = Arch::amorpheus;
  std::size_t obs_width = kObsWidth;

  // Amorpheus: linear encoder, transformer stack, per-node decoder.
  std::size_t model_width = 128;
  std::size_t heads = 2;
  std::size_t layers = 3;
  std::size_t ff_hidden = 256;
  bool residual = true;

  // NerveNet-style message passing.
  std::size_t gnn_hidden = 64;
  std::size_t message_passes = 3;

  // SMP-style tree policy; max_children is fixed when the model is built.
  std::size_t smp_hidden = 64;
  std::size_t smp_message = 32;
  std::size_t max_children = 2;
};

/// Attention masks captured during a forward pass, layer-major then head:
/// masks[layer * heads + head] has shape (graphs, nodes, nodes).
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> masks;
};

/// Per-node scalar network over a batch of graphs that share one topology.
/// Inputs are (graphs * nodes, input_width) with graph-major rows; outputs are
/// (graphs * nodes, 1). Actor and critic use the same families; a critic sees
/// each node's action appended to its observation row.
template <typename T>
class GraphNet {
 public:
  virtual ~GraphNet() = default;
  virtual Arch arch() const = 0;
  virtual const PolicyConfig& config() const = 0;
  virtual std::size_t input_width() const = 0;
  virtual Tensor<T> forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                            ForwardTrace<T>* trace = nullptr) const = 0;
  virtual void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const = 0;
  virtual std::unique_ptr<GraphNet> clone() const = 0;

  std::vector<Tensor<T>> parameters() const;
};

template <typename T>
struct AmorpheusParams {
  Linear<T> encoder;
  std::vector<TransformerBlockParams<T>> blocks;
  MlpParams<T> decoder;
  bool residual = true;

  static AmorpheusParams init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
struct NerveNetParams {
  MlpParams<T> encoder;
  MlpParams<T> edge_updater;
  GruParams<T> node_updater;
  MlpParams<T> decoder;
  std::size_t message_passes = 3;

  static NerveNetParams init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
struct SmpParams {
  MlpParams<T> bottom_up;  // own features ++ K child messages -> upward message
  MlpParams<T> top_down;   // own features ++ upward message ++ parent message -> output ++ K child messages
  std::size_t max_children = 2;
  std::size_t message = 32;

  static SmpParams init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
class AmorpheusNet final : public GraphNet<T> {
 public:
  AmorpheusNet(PolicyConfig cfg, std::size_t input_width, Rng& rng);
  Arch arch() const override { return Arch::amorpheus; }
  const PolicyConfig& config() const override { return cfg_; }
  std::size_t input_width() const override { return input_width_; }
  Tensor<T> forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                    ForwardTrace<T>* trace = nullptr) const override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::unique_ptr<GraphNet<T>> clone() const override;
  const AmorpheusParams<T>& params() const { return p_; }

 private:
  PolicyConfig cfg_;
  std::size_t input_width_;
  AmorpheusParams<T> p_;
};

template <typename T>
class NerveNetNet final : public GraphNet<T> {
 public:
  NerveNetNet(PolicyConfig cfg, std::size_t input_width, Rng& rng);
  Arch arch() const override { return Arch::nervenet; }
  const PolicyConfig& config() const override { return cfg_; }
  std::size_t input_width() const override { return input_width_; }
  Tensor<T> forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                    ForwardTrace<T>* trace = nullptr) const override;
  /// Node states after the last message pass, (graphs * nodes, gnn_hidden).
  Tensor<T> hidden_states(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::unique_ptr<GraphNet<T>> clone() const override;
  const NerveNetParams<T>& params() const { return p_; }

 private:
  PolicyConfig cfg_;
  std::size_t input_width_;
  NerveNetParams<T> p_;
};

template <typename T>
class SmpNet final : public GraphNet<T> {
 public:
  SmpNet(PolicyConfig cfg, std::size_t input_width, Rng& rng);
  Arch arch() const override { return Arch::smp; }
  const PolicyConfig& config() const override { return cfg_; }
  std::size_t input_width() const override { return input_width_; }
  /// Throws StructuralError for non-trees and CapacityError when a node has
  /// more than max_children children.
  Tensor<T> forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                    ForwardTrace<T>* trace = nullptr) const override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const override;
  std::unique_ptr<GraphNet<T>> clone() const override;
  const SmpParams<T>& params() const { return p_; }

 private:
  PolicyConfig cfg_;
  std::size_t input_width_;
  SmpParams<T> p_;
};

/// Builds an actor (input = observation) or critic (input = observation ++
/// action) of the configured family. Deterministic in `seed`.
template <typename T>
std::unique_ptr<GraphNet<T>> init_policy(const PolicyConfig& cfg, NetRole role, std::uint64_t seed);

/// Copies parameter values from `src` into `dst` (same architecture).
template <typename T>
void copy_parameters(const GraphNet<T>& src, GraphNet<T>& dst);

/// dst <- tau * src + (1 - tau) * dst, parameter-wise.
template <typename T>
void soft_update(const GraphNet<T>& src, GraphNet<T>& dst, double tau);

// Single-graph entry points. `obs` is (nodes, obs_width).

template <typename T>
struct ActorOutput {
  std::vector<T> actions;         // one per node, in [-1, 1]
  std::vector<Tensor<T>> masks;   // per layer and head, (1, nodes, nodes); Amorpheus only
};

template <typename T>
ActorOutput<T> amorpheus_actor_forward(const AmorpheusNet<T>& net, const Tensor<T>& obs);

template <typename T>
std::vector<T> amorpheus_critic_forward(const AmorpheusNet<T>& net, const Tensor<T>& obs,
                                        const std::vector<T>& actions);

template <typename T>
struct NerveNetOutput {
  std::vector<T> action_means;
  Tensor<T> hidden;
};

template <typename T>
NerveNetOutput<T> nervenet_forward(const NerveNetNet<T>& net, const MorphGraph& graph, const Tensor<T>& obs);

/// Squashed per-node actions; the root entry is always 0.
template <typename T>
std::vector<T> smp_forward(const SmpNet<T>& net, const MorphGraph& tree, const Tensor<T>& obs);

}  // namespace amorph
