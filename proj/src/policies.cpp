#include "amorph/policies.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "amorph/errors.hpp"
#include "amorph/ops.hpp"

namespace amorph {

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::amorpheus: return "amorpheus";
    case Arch::nervenet: return "nervenet";
    case Arch::smp: return "smp";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  if (name == "amorpheus") return Arch::amorpheus;
  if (name == "nervenet") return Arch::nervenet;
  if (name == "smp") return Arch::smp;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

bool accepts_topology(Arch arch, TopologyScheme scheme) {
  return !(arch == Arch::smp && scheme == TopologyScheme::full);
}

template <typename T>
std::vector<Tensor<T>> GraphNet<T>::parameters() const {
  std::vector<NamedTensor<T>> named;
  collect("", named);
  std::vector<Tensor<T>> out;
  out.reserve(named.size());
  for (auto& nt : named) out.push_back(nt.tensor);
  return out;
}

namespace {

template <typename T>
std::size_t rows_per_graph(const Tensor<T>& features, std::size_t graphs, std::size_t input_width) {
  if (features.rank() != 2 || features.dim(1) != input_width) {
    throw DimensionError("graph net: features " + shape_str(features.shape()) + ", expected width " +
                         std::to_string(input_width));
  }
  if (graphs == 0 || features.dim(0) % graphs != 0 || features.dim(0) == 0) {
    throw DimensionError("graph net: " + std::to_string(features.dim(0)) + " rows do not split into " +
                         std::to_string(graphs) + " graphs");
  }
  return features.dim(0) / graphs;
}

template <typename T>
void require_finite(const Tensor<T>& t) {
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite value in node features");
  }
}

template <typename T, typename Net>
std::unique_ptr<GraphNet<T>> clone_net(const Net& self) {
  Rng scratch(0);
  auto copy = std::make_unique<Net>(self.config(), self.input_width(), scratch);
  copy_parameters<T>(self, *copy);
  return copy;
}

/// Row-normalised incoming-edge matrix: entry (i, k) = 1/indegree(i) for k -> i.
template <typename T>
Tensor<T> mean_aggregation(const MorphGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<T> a(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto senders = graph.in_neighbors(i);
    for (std::size_t k : senders) a[i * n + k] = T(1) / static_cast<T>(senders.size());
  }
  return Tensor<T>({n, n}, std::move(a));
}

std::vector<std::size_t> bfs_order(const ParentArray& parents, std::size_t root) {
  const auto children = children_of(parents);
  std::vector<std::size_t> order;
  std::queue<std::size_t> q;
  q.push(root);
  while (!q.empty()) {
    std::size_t v = q.front();
    q.pop();
    order.push_back(v);
    for (std::size_t c : children[v]) q.push(c);
  }
  return order;
}

template <typename T>
Tensor<T> single_graph(const Tensor<T>& obs, std::size_t width) {
  if (obs.rank() != 2 || obs.dim(1) != width || obs.dim(0) == 0) {
    throw DimensionError("observation " + shape_str(obs.shape()) + ", expected (nodes, " + std::to_string(width) + ")");
  }
  return obs;
}

// Amorpheus never reads edges; single-graph entry points hand it a bare node set.
MorphGraph edgeless(std::size_t n) {
  return MorphGraph(n, std::vector<std::string>(n, "link"), {}, 0);
}

template <typename T>
std::vector<T> column(const Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

}  // namespace

// ---------------------------------------------------------------- Amorpheus

template <typename T>
AmorpheusParams<T> AmorpheusParams<T>::init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng) {
  AmorpheusParams p;
  p.residual = cfg.residual;
  p.encoder = Linear<T>::init(input_width, cfg.model_width, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.blocks.push_back(TransformerBlockParams<T>::init(cfg.model_width, cfg.heads, cfg.ff_hidden, rng));
  }
  const std::size_t decoder_in = cfg.model_width + (cfg.residual ? input_width : 0);
  p.decoder = MlpParams<T>::init({decoder_in, 1}, Activation::identity, rng);
  return p;
}

template <typename T>
void AmorpheusParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  encoder.collect(prefix + "encoder", out);
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(prefix + "block" + std::to_string(l), out);
  decoder.collect(prefix + "decoder", out);
}

template <typename T>
AmorpheusNet<T>::AmorpheusNet(PolicyConfig cfg, std::size_t input_width, Rng& rng)
    : cfg_(cfg), input_width_(input_width), p_(AmorpheusParams<T>::init(cfg, input_width, rng)) {}

template <typename T>
Tensor<T> AmorpheusNet<T>::forward(const MorphGraph&, std::size_t graphs, const Tensor<T>& features,
                                   ForwardTrace<T>* trace) const {
  const std::size_t nodes = rows_per_graph(features, graphs, input_width_);
  Tensor<T> h = p_.encoder.forward(features);
  for (const auto& block : p_.blocks) {
    AttentionOutput<T> out = transformer_block(block, h, graphs, nodes);
    if (trace) trace->masks.insert(trace->masks.end(), out.masks.begin(), out.masks.end());
    h = out.values;
  }
  Tensor<T> decoder_in = p_.residual ? ops::concat<T>({h, features}) : h;
  return mlp_forward(p_.decoder, decoder_in);
}

template <typename T>
void AmorpheusNet<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  p_.collect(prefix, out);
}

template <typename T>
std::unique_ptr<GraphNet<T>> AmorpheusNet<T>::clone() const {
  return clone_net<T>(*this);
}

// ----------------------------------------------------------------- NerveNet

template <typename T>
NerveNetParams<T> NerveNetParams<T>::init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng) {
  const std::size_t h = cfg.gnn_hidden;
  NerveNetParams p;
  p.message_passes = cfg.message_passes;
  p.encoder = MlpParams<T>::init({input_width, h, h}, Activation::tanh, rng);
  p.edge_updater = MlpParams<T>::init({h, h, h}, Activation::tanh, rng);
  p.node_updater = GruParams<T>::init(h, h, rng);
  p.decoder = MlpParams<T>::init({h, h, 1}, Activation::tanh, rng);
  return p;
}

template <typename T>
void NerveNetParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  encoder.collect(prefix + "encoder", out);
  edge_updater.collect(prefix + "edge_updater", out);
  node_updater.collect(prefix + "node_updater", out);
  decoder.collect(prefix + "decoder", out);
}

template <typename T>
NerveNetNet<T>::NerveNetNet(PolicyConfig cfg, std::size_t input_width, Rng& rng)
    : cfg_(cfg), input_width_(input_width), p_(NerveNetParams<T>::init(cfg, input_width, rng)) {}

template <typename T>
Tensor<T> NerveNetNet<T>::hidden_states(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features) const {
  using namespace ops;
  const std::size_t nodes = rows_per_graph(features, graphs, input_width_);
  if (nodes != graph.node_count()) {
    throw DimensionError("nervenet: graph has " + std::to_string(graph.node_count()) + " nodes, features have " +
                         std::to_string(nodes));
  }
  const std::size_t width = cfg_.gnn_hidden;
  Tensor<T> h = mlp_forward(p_.encoder, features);
  if (p_.message_passes == 0) return h;

  const Tensor<T> aggregate = mean_aggregation<T>(graph);
  // Nodes without incoming edges keep their state.
  std::vector<T> keep(nodes, T(1));
  bool any_isolated = false;
  for (std::size_t i = 0; i < nodes; ++i) {
    if (graph.in_neighbors(i).empty()) {
      keep[i] = T(0);
      any_isolated = true;
    }
  }
  Tensor<T> update_mask;
  if (any_isolated) {
    std::vector<T> m(graphs * nodes * width);
    for (std::size_t g = 0; g < graphs; ++g) {
      for (std::size_t i = 0; i < nodes; ++i) {
        std::fill_n(m.begin() + static_cast<std::ptrdiff_t>((g * nodes + i) * width), width, keep[i]);
      }
    }
    update_mask = Tensor<T>({graphs * nodes, width}, std::move(m));
  }

  for (std::size_t pass = 0; pass < p_.message_passes; ++pass) {
    // A message depends on the sender only, so one per node serves all its out-edges.
    Tensor<T> messages = reshape(mlp_forward(p_.edge_updater, h), {graphs, nodes, width});
    Tensor<T> incoming = reshape(matmul(aggregate, messages), {graphs * nodes, width});
    Tensor<T> next = gru_cell_forward(p_.node_updater, h, incoming);
    h = any_isolated ? add(h, mul(sub(next, h), update_mask)) : next;
  }
  return h;
}

template <typename T>
Tensor<T> NerveNetNet<T>::forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                                  ForwardTrace<T>*) const {
  return mlp_forward(p_.decoder, hidden_states(graph, graphs, features));
}

template <typename T>
void NerveNetNet<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  p_.collect(prefix, out);
}

template <typename T>
std::unique_ptr<GraphNet<T>> NerveNetNet<T>::clone() const {
  return clone_net<T>(*this);
}

// ---------------------------------------------------------------------- SMP

template <typename T>
SmpParams<T> SmpParams<T>::init(const PolicyConfig& cfg, std::size_t input_width, Rng& rng) {
  SmpParams p;
  p.max_children = cfg.max_children;
  p.message = cfg.smp_message;
  const std::size_t m = cfg.smp_message, k = cfg.max_children, h = cfg.smp_hidden;
  p.bottom_up = MlpParams<T>::init({input_width + k * m, h, m}, Activation::tanh, rng);
  p.top_down = MlpParams<T>::init({input_width + 2 * m, h, 1 + k * m}, Activation::tanh, rng);
  return p;
}

template <typename T>
void SmpParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  bottom_up.collect(prefix + "bottom_up", out);
  top_down.collect(prefix + "top_down", out);
}

template <typename T>
SmpNet<T>::SmpNet(PolicyConfig cfg, std::size_t input_width, Rng& rng)
    : cfg_(cfg), input_width_(input_width), p_(SmpParams<T>::init(cfg, input_width, rng)) {}

template <typename T>
Tensor<T> SmpNet<T>::forward(const MorphGraph& graph, std::size_t graphs, const Tensor<T>& features,
                             ForwardTrace<T>*) const {
  using namespace ops;
  const std::size_t nodes = rows_per_graph(features, graphs, input_width_);
  if (nodes != graph.node_count()) {
    throw DimensionError("smp: graph has " + std::to_string(graph.node_count()) + " nodes, features have " +
                         std::to_string(nodes));
  }
  const ParentArray parents = validate_tree(graph);
  const auto children = children_of(parents);
  for (std::size_t i = 0; i < nodes; ++i) {
    if (children[i].size() > p_.max_children) {
      throw CapacityError("smp: node " + std::to_string(i) + " has " + std::to_string(children[i].size()) +
                          " children, model was built for at most " + std::to_string(p_.max_children));
    }
  }
  const std::size_t m = p_.message;
  const Tensor<T> empty_slot = Tensor<T>::zeros({graphs, m});
  const Tensor<T> stacked = reshape(features, {graphs, nodes, input_width_});
  std::vector<Tensor<T>> own(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    own[i] = reshape(slice(stacked, 1, i, i + 1), {graphs, input_width_});
  }

  const auto order = bfs_order(parents, graph.root());
  std::vector<Tensor<T>> up(nodes);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t i = *it;
    std::vector<Tensor<T>> parts{own[i]};
    for (std::size_t slot = 0; slot < p_.max_children; ++slot) {
      parts.push_back(slot < children[i].size() ? up[children[i][slot]] : empty_slot);
    }
    up[i] = tanh(mlp_forward(p_.bottom_up, concat(parts)));
  }

  std::vector<Tensor<T>> down(nodes);
  std::vector<Tensor<T>> outputs(nodes);
  down[graph.root()] = empty_slot;
  for (std::size_t i : order) {
    Tensor<T> out = mlp_forward(p_.top_down, concat<T>({own[i], up[i], down[i]}));
    outputs[i] = slice(out, 1, 0, 1);
    for (std::size_t slot = 0; slot < children[i].size(); ++slot) {
      down[children[i][slot]] = tanh(slice(out, 1, 1 + slot * m, 1 + (slot + 1) * m));
    }
  }
  Tensor<T> per_node = nodes == 1 ? outputs.front() : concat(outputs);
  return reshape(per_node, {graphs * nodes, 1});
}

template <typename T>
void SmpNet<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  p_.collect(prefix, out);
}

template <typename T>
std::unique_ptr<GraphNet<T>> SmpNet<T>::clone() const {
  return clone_net<T>(*this);
}

// ------------------------------------------------------------------ helpers

template <typename T>
std::unique_ptr<GraphNet<T>> init_policy(const PolicyConfig& cfg, NetRole role, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t width = cfg.obs_width + (role == NetRole::critic ? 1 : 0);
  switch (cfg.arch) {
    case Arch::amorpheus: return std::make_unique<AmorpheusNet<T>>(cfg, width, rng);
    case Arch::nervenet: return std::make_unique<NerveNetNet<T>>(cfg, width, rng);
    case Arch::smp: return std::make_unique<SmpNet<T>>(cfg, width, rng);
  }
  throw std::invalid_argument("unknown architecture");
}

template <typename T>
void copy_parameters(const GraphNet<T>& src, GraphNet<T>& dst) {
  auto from = src.parameters();
  auto to = dst.parameters();
  if (from.size() != to.size()) throw DimensionError("copy_parameters: parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].shape() != to[i].shape()) {
      throw DimensionError("copy_parameters: shape " + shape_str(from[i].shape()) + " vs " + shape_str(to[i].shape()));
    }
    std::copy(from[i].values().begin(), from[i].values().end(), to[i].values_mut().begin());
  }
}

template <typename T>
void soft_update(const GraphNet<T>& src, GraphNet<T>& dst, double tau) {
  if (tau == 1.0) {
    copy_parameters(src, dst);
    return;
  }
  auto from = src.parameters();
  auto to = dst.parameters();
  const T t = static_cast<T>(tau);
  for (std::size_t i = 0; i < from.size(); ++i) {
    auto s = from[i].values();
    auto d = to[i].values_mut();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = t * s[j] + (T(1) - t) * d[j];
  }
}

template <typename T>
ActorOutput<T> amorpheus_actor_forward(const AmorpheusNet<T>& net, const Tensor<T>& obs) {
  single_graph(obs, net.input_width());
  require_finite(obs);
  const std::size_t n = obs.dim(0);
  ForwardTrace<T> trace;
  Tensor<T> out = ops::tanh(net.forward(edgeless(n), 1, obs, &trace));
  return {column(out), std::move(trace.masks)};
}

template <typename T>
std::vector<T> amorpheus_critic_forward(const AmorpheusNet<T>& net, const Tensor<T>& obs,
                                        const std::vector<T>& actions) {
  if (obs.rank() != 2 || actions.size() != obs.dim(0)) {
    throw DimensionError("critic: " + std::to_string(actions.size()) + " actions for observation " +
                         shape_str(obs.shape()));
  }
  require_finite(obs);
  const std::size_t n = obs.dim(0);
  Tensor<T> a({n, 1}, actions);
  Tensor<T> features = ops::concat<T>({obs, a});
  single_graph(features, net.input_width());
  return column(net.forward(edgeless(n), 1, features));
}

template <typename T>
NerveNetOutput<T> nervenet_forward(const NerveNetNet<T>& net, const MorphGraph& graph, const Tensor<T>& obs) {
  single_graph(obs, net.input_width());
  Tensor<T> hidden = net.hidden_states(graph, 1, obs);
  Tensor<T> means = ops::tanh(mlp_forward(net.params().decoder, hidden));
  return {column(means), hidden};
}

template <typename T>
std::vector<T> smp_forward(const SmpNet<T>& net, const MorphGraph& tree, const Tensor<T>& obs) {
  single_graph(obs, net.input_width());
  std::vector<T> actions = column(ops::tanh(net.forward(tree, 1, obs)));
  actions[tree.root()] = T(0);
  return actions;
}

#define AMORPH_INSTANTIATE_POLICIES(T)                                                                     \
  template class GraphNet<T>;                                                                             \
  template struct AmorpheusParams<T>;                                                                     \
  template struct NerveNetParams<T>;                                                                      \
  template struct SmpParams<T>;                                                                           \
  template class AmorpheusNet<T>;                                                                         \
  template class NerveNetNet<T>;                                                                          \
  template class SmpNet<T>;                                                                               \
  template std::unique_ptr<GraphNet<T>> init_policy<T>(const PolicyConfig&, NetRole, std::uint64_t);     \
  template void copy_parameters<T>(const GraphNet<T>&, GraphNet<T>&);                                     \
  template void soft_update<T>(const GraphNet<T>&, GraphNet<T>&, double);                                 \
  template ActorOutput<T> amorpheus_actor_forward<T>(const AmorpheusNet<T>&, const Tensor<T>&);           \
  template std::vector<T> amorpheus_critic_forward<T>(const AmorpheusNet<T>&, const Tensor<T>&,           \
                                                      const std::vector<T>&);                             \
  template NerveNetOutput<T> nervenet_forward<T>(const NerveNetNet<T>&, const MorphGraph&, const Tensor<T>&); \
  template std::vector<T> smp_forward<T>(const SmpNet<T>&, const MorphGraph&, const Tensor<T>&);

AMORPH_INSTANTIATE_POLICIES(float)
AMORPH_INSTANTIATE_POLICIES(double)

}  // namespace amorph
