// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--jobs N] [--work DIR] [criterion ...]
//
// With no criteria listed every one runs, cheapest first and the 200k-step
// learning run last.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "amorph/ablation.hpp"
#include "amorph/analysis.hpp"
#include "amorph/checkpoint.hpp"
#include "amorph/env.hpp"
#include "amorph/errors.hpp"
#include "amorph/gradcheck.hpp"
#include "amorph/nn.hpp"
#include "amorph/ops.hpp"
#include "amorph/policies.hpp"
#include "amorph/td3.hpp"
#include "amorph/train.hpp"

using namespace amorph;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Context {
  fs::path work;
  std::size_t jobs = 1;
  std::size_t learning_steps = 200000;
};

// Collects failures; the first few messages end up in the detail line.
class Verdict {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failures_ == 0; }
  Outcome outcome(std::string summary) const {
    if (ok()) return {true, std::move(summary)};
    return {false, summary + " | " + std::to_string(failures_) + " failure(s): " + messages_};
  }

 private:
  std::size_t failures_ = 0;
  std::string messages_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path fresh_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::size_t size = 1;
  for (auto d : shape) size *= d;
  std::vector<T> v(size);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), grad);
}

template <typename T>
Tensor<T> permute_rows(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t c = x.dim(1);
  std::vector<T> v(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = x[perm[i] * c + j];
  return Tensor<T>(x.shape(), v);
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

PolicyConfig narrow(Arch arch) {
  PolicyConfig c;
  c.arch = arch;
  c.model_width = 8;
  c.heads = 2;
  c.layers = 2;
  c.ff_hidden = 8;
  c.gnn_hidden = 6;
  c.message_passes = 2;
  c.smp_hidden = 6;
  c.smp_message = 4;
  c.max_children = 2;
  return c;
}

MorphGraph branching() { return load_graph_file(fs::path(AMORPH_FIXTURES) / "branching.graph"); }

// ---------------------------------------------------------------------------
// 1. Gradient oracle

Outcome gradient_oracle(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  double worst = 0.0;
  std::size_t checks = 0, entries = 0;
  std::mt19937_64 rng(101);

  auto run = [&](const std::string& name, const std::function<Tensor<double>()>& loss,
                 std::vector<Tensor<double>> params, std::size_t per_param = 0) {
    // Step 1e-4: at 1e-5 the rounding noise of an O(1) loss (~1e-12) is already
    // 1e-4 relative to the smallest genuine gradients (~1e-8); at 1e-3 the
    // stencil starts to straddle relu kinks.
    const GradCheckReport r = finite_difference_check<double>(loss, std::move(params), 1e-4, per_param);
    worst = std::max(worst, r.max_rel_error);
    entries += r.entries_checked;
    ++checks;
    v.expect(r.max_rel_error <= 1e-4, name + " rel error " + fmt(r.max_rel_error) + " at tensor " +
                                          std::to_string(r.worst_param) + "[" + std::to_string(r.worst_entry) +
                                          "], analytic " + fmt(r.worst_analytic, 8) + " numeric " +
                                          fmt(r.worst_numeric, 8));
  };
  // The key bias of an attention layer adds the same vector to every key, so
  // each row of logits shifts by a constant and its gradient is exactly zero.
  // A relative error there is pure rounding noise over the 1e-8 floor; check
  // the zero directly instead.
  std::size_t zero_entries = 0;
  auto run_zero = [&](const std::string& name, const std::function<Tensor<double>()>& loss, const Tensor<double>& bias) {
    double analytic = 0.0, numeric = 0.0;
    {
      Tape<double> tape;
      Recording<double> on(tape);
      bias.zero_grad();
      tape.backward(loss());
    }
    for (double g : bias.grad()) analytic = std::max(analytic, std::abs(g));
    for (std::size_t i = 0; i < bias.size(); ++i) {
      const double keep = bias[i];
      double f[2];
      for (int s = 0; s < 2; ++s) {
        bias.values_mut()[i] = keep + (s ? -1e-5 : 1e-5);
        NoGrad<double> off;
        f[s] = loss().item();
      }
      bias.values_mut()[i] = keep;
      numeric = std::max(numeric, std::abs(f[0] - f[1]) / 2e-5);
      ++zero_entries;
    }
    v.expect(analytic <= 1e-12 && numeric <= 1e-9,
             name + " key bias gradient not zero: analytic " + fmt(analytic) + ", numeric " + fmt(numeric));
  };
  // Random projection of the output to a scalar, so no direction of the
  // gradient is blind (a plain sum is flat through layer norm).
  auto projected = [](const Tensor<double>& y, const Tensor<double>& w) { return ops::sum(ops::mul(y, w)); };
  auto params_of = [](auto& block, const Tensor<double>& x) {
    std::vector<NamedTensor<double>> named;
    block.collect("p", named);
    std::vector<Tensor<double>> out{x};
    for (auto& t : named) {
      if (!t.name.ends_with("key.bias")) out.push_back(t.tensor);
    }
    return out;
  };

  auto split_key_bias = [](const GraphNet<double>& net, std::vector<Tensor<double>>& rest,
                           std::vector<Tensor<double>>& keys) {
    std::vector<NamedTensor<double>> named;
    net.collect("p", named);
    for (auto& t : named) (t.name.ends_with("key.bias") ? keys : rest).push_back(t.tensor);
  };

  for (std::size_t nodes : {3u, 5u}) {
    const std::string tag = " (" + std::to_string(nodes) + " nodes)";
    const std::size_t graphs = 2, rows = graphs * nodes, width = 8;
    const Tensor<double> x = random_tensor<double>({rows, width}, rng, 1.0, true);
    const Tensor<double> w = random_tensor<double>({rows, width}, rng);
    const Tensor<double> w1 = random_tensor<double>({rows, 1}, rng);

    auto lin = Linear<double>::init(width, width, rng);
    run("linear" + tag, [&] { return projected(lin.forward(x), w); }, params_of(lin, x));
    for (Activation act : {Activation::tanh, Activation::relu}) {
      auto mlp = MlpParams<double>::init({width, 7, 1}, act, rng);
      run("mlp" + tag, [&] { return projected(mlp_forward(mlp, x), w1); }, params_of(mlp, x));
    }
    auto gru = GruParams<double>::init(width, 6, rng);
    const Tensor<double> h = random_tensor<double>({rows, 6}, rng, 1.0, true);
    const Tensor<double> wh = random_tensor<double>({rows, 6}, rng);
    auto gru_params = params_of(gru, x);
    gru_params.push_back(h);
    run("gru" + tag, [&] { return projected(gru_cell_forward(gru, h, x), wh); }, gru_params);
    auto ln = LayerNormParams<double>::init(width);
    for (auto& g : ln.gain.values_mut()) g = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& b : ln.bias.values_mut()) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    run("layer norm" + tag, [&] { return projected(layer_norm_forward(ln, x), w); }, params_of(ln, x));
    auto att = AttentionParams<double>::init(width, 2, rng);
    auto att_loss = [&] { return projected(multihead_attention(att, x, graphs, nodes).values, w); };
    run("attention" + tag, att_loss, params_of(att, x));
    run_zero("attention" + tag, att_loss, att.key.bias);
    auto block = TransformerBlockParams<double>::init(width, 2, 8, rng);
    auto block_loss = [&] { return projected(transformer_block(block, x, graphs, nodes).values, w); };
    run("transformer block" + tag, block_loss, params_of(block, x));
    run_zero("transformer block" + tag, block_loss, block.attention.key.bias);
  }

  // Whole policies inside the two training losses: critic regression onto a
  // fixed per-node target, and the actor objective through critic 1.
  const std::vector<MorphGraph> fixtures{build_chain_morphology(2), build_chain_morphology(4), branching()};
  auto policy_losses = [&](const PolicyConfig& cfg, const MorphGraph& graph, std::size_t per_param,
                           const std::string& tag) {
    const std::size_t n = graph.node_count(), graphs = 2, rows = graphs * n;
    const auto actor = init_policy<double>(cfg, NetRole::actor, rng());
    const auto critic = init_policy<double>(cfg, NetRole::critic, rng());
    const Tensor<double> obs = random_tensor<double>({rows, kObsWidth}, rng);
    const Tensor<double> act = random_tensor<double>({rows, 1}, rng);
    const Tensor<double> target = random_tensor<double>({rows, 1}, rng);
    std::vector<double> m(rows, 1.0);
    for (std::size_t b = 0; b < graphs; ++b) m[b * n + graph.root()] = 0.0;
    const Tensor<double> mask({rows, 1}, m);

    auto critic_loss = [&] {
      Tensor<double> d = ops::sub(critic->forward(graph, graphs, ops::concat<double>({obs, act})), target);
      return ops::mean(ops::mul(d, d));
    };
    auto actor_loss = [&] {
      Tensor<double> a = ops::mul(ops::tanh(actor->forward(graph, graphs, obs)), mask);
      return ops::scale(ops::mean(critic->forward(graph, graphs, ops::concat<double>({obs, a}))), -1.0);
    };
    std::vector<Tensor<double>> critic_params, actor_params, critic_keys, actor_keys;
    split_key_bias(*critic, critic_params, critic_keys);
    split_key_bias(*actor, actor_params, actor_keys);
    run(tag + " critic loss", critic_loss, critic_params, per_param);
    for (const auto& k : critic_keys) run_zero(tag + " critic loss", critic_loss, k);
    auto both = actor_params;
    both.insert(both.end(), critic_params.begin(), critic_params.end());
    run(tag + " actor loss", actor_loss, both, per_param);
    for (const auto& k : actor_keys) run_zero(tag + " actor loss", actor_loss, k);
  };
  for (Arch arch : {Arch::amorpheus, Arch::nervenet, Arch::smp}) {
    for (const MorphGraph& g : fixtures) {
      policy_losses(narrow(arch), g, 0, std::string(to_string(arch)) + " narrow " + std::to_string(g.node_count()) + "n");
    }
    // Table widths, probing a few evenly spaced entries of each tensor.
    policy_losses(PolicyConfig{.arch = arch}, fixtures[0], 6, std::string(to_string(arch)) + " full width");
  }

  const double secs = seconds_since(t0);
  v.expect(secs <= 300.0, "runtime " + fmt(secs) + " s exceeds 5 min");
  return v.outcome(std::to_string(checks) + " checks, " + std::to_string(entries) + " entries, max rel error " +
                   fmt(worst, 3) + "; " + std::to_string(zero_entries) + " key-bias entries with exactly zero gradient; " +
                   fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------------------
// 2. Attention contract

Outcome attention_contract(const Context&) {
  Verdict v;
  std::mt19937_64 rng(202);
  double worst_row = 0.0, worst_oracle = 0.0, worst_shift = 0.0;
  double min_weight = 1.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nodes = 1 + rng() % 8, graphs = 1 + rng() % 3;
    const std::size_t heads = std::size_t{1} << (rng() % 3), head_dim = 1 + rng() % 4, width = heads * head_dim;
    const double scale = std::uniform_real_distribution<double>(0.1, 4.0)(rng);
    auto p = AttentionParams<double>::init(width, heads, rng);
    const Tensor<double> x = random_tensor<double>({graphs * nodes, width}, rng, scale);
    const AttentionOutput<double> out = multihead_attention(p, x, graphs, nodes);
    v.expect(out.masks.size() == heads, "mask count");

    // Independent logits from the projections.
    const Tensor<double> q = p.query.forward(x), k = p.key.forward(x);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor<double>& mask = out.masks[h];
      for (std::size_t g = 0; g < graphs; ++g) {
        for (std::size_t i = 0; i < nodes; ++i) {
          std::vector<double> logit(nodes);
          for (std::size_t j = 0; j < nodes; ++j) {
            double s = 0;
            for (std::size_t d = 0; d < head_dim; ++d) {
              s += q[(g * nodes + i) * width + h * head_dim + d] * k[(g * nodes + j) * width + h * head_dim + d];
            }
            logit[j] = s / std::sqrt(static_cast<double>(head_dim));
          }
          const double top = *std::max_element(logit.begin(), logit.end());
          double z = 0;
          for (double l : logit) z += std::exp(l - top);
          double row = 0;
          for (std::size_t j = 0; j < nodes; ++j) {
            const double m = mask[(g * nodes + i) * nodes + j];
            row += m;
            min_weight = std::min(min_weight, m);
            worst_oracle = std::max(worst_oracle, std::abs(m - std::exp(logit[j] - top) / z));
          }
          worst_row = std::max(worst_row, std::abs(row - 1.0));
          if (nodes == 1) v.expect(mask[g] == 1.0, "single-node mask is not [[1]]");
        }
      }
    }

    // Shifting every key by the same vector adds a per-row constant to the
    // logits; the masks must not move.
    auto shifted = p;
    shifted.key.bias = p.key.bias.clone();
    for (auto& b : shifted.key.bias.values_mut()) b += std::uniform_real_distribution<double>(-5, 5)(rng);
    const AttentionOutput<double> moved = multihead_attention(shifted, x, graphs, nodes);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t e = 0; e < out.masks[h].size(); ++e)
        worst_shift = std::max(worst_shift, std::abs(moved.masks[h][e] - out.masks[h][e]));

    // Same property on the bare softmax with explicit row offsets.
    const Tensor<double> logits = random_tensor<double>({nodes, nodes}, rng, 10.0);
    Tensor<double> offset = logits.clone();
    for (std::size_t i = 0; i < nodes; ++i) {
      const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
      for (std::size_t j = 0; j < nodes; ++j) offset.values_mut()[i * nodes + j] += c;
    }
    const Tensor<double> a = ops::softmax(logits), b = ops::softmax(offset);
    for (std::size_t e = 0; e < a.size(); ++e) worst_shift = std::max(worst_shift, std::abs(a[e] - b[e]));
  }
  v.expect(worst_row <= 1e-9, "row sum off by " + fmt(worst_row));
  v.expect(min_weight >= 0.0, "negative weight " + fmt(min_weight));
  v.expect(worst_oracle <= 1e-9, "mask differs from softmax of logits by " + fmt(worst_oracle));
  v.expect(worst_shift <= 1e-9, "logit shift moved the mask by " + fmt(worst_shift));
  return v.outcome("1000 evaluations, max |row sum - 1| " + fmt(worst_row, 3) + ", max shift change " +
                   fmt(worst_shift, 3) + ", min weight " + fmt(min_weight, 3));
}

// ---------------------------------------------------------------------------
// 3. Permutation equivariance

Outcome permutation_equivariance(const Context&) {
  Verdict v;
  std::mt19937_64 rng(303);
  const auto actor = init_policy<float>(PolicyConfig{}, NetRole::actor, 3);
  const auto critic = init_policy<float>(PolicyConfig{}, NetRole::critic, 4);
  const auto& a_net = dynamic_cast<const AmorpheusNet<float>&>(*actor);
  const auto& c_net = dynamic_cast<const AmorpheusNet<float>&>(*critic);
  double worst_action = 0, worst_mask = 0, worst_value = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    const Tensor<float> obs = random_tensor<float>({n, kObsWidth}, rng);
    std::vector<float> act(n);
    for (auto& a : act) a = std::uniform_real_distribution<float>(-1, 1)(rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> pact(n);
    for (std::size_t i = 0; i < n; ++i) pact[i] = act[perm[i]];

    const auto a = amorpheus_actor_forward(a_net, obs);
    const auto b = amorpheus_actor_forward(a_net, permute_rows(obs, perm));
    for (std::size_t i = 0; i < n; ++i) worst_action = std::max(worst_action, double(std::abs(b.actions[i] - a.actions[perm[i]])));
    for (std::size_t m = 0; m < a.masks.size(); ++m)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          worst_mask = std::max(worst_mask, double(std::abs(b.masks[m][i * n + j] - a.masks[m][perm[i] * n + perm[j]])));
    const auto va = amorpheus_critic_forward(c_net, obs, act);
    const auto vb = amorpheus_critic_forward(c_net, permute_rows(obs, perm), pact);
    for (std::size_t i = 0; i < n; ++i) worst_value = std::max(worst_value, double(std::abs(vb[i] - va[perm[i]])));
  }
  v.expect(worst_action <= 1e-6, "actor deviation " + fmt(worst_action));
  v.expect(worst_mask <= 1e-6, "mask deviation " + fmt(worst_mask));
  v.expect(worst_value <= 1e-6, "critic deviation " + fmt(worst_value));

  // SMP witness: two siblings with swapped features. A child-order-blind
  // model would swap their outputs too.
  const auto smp_net = init_policy<float>(narrow(Arch::smp), NetRole::actor, 5);
  const auto& smp = dynamic_cast<const SmpNet<float>&>(*smp_net);
  const MorphGraph fork(3, {"torso", "link", "link"}, {{0, 1}, {1, 0}, {0, 2}, {2, 0}}, 0);
  const Tensor<float> obs = random_tensor<float>({3, kObsWidth}, rng);
  const auto s = smp_forward(smp, fork, obs);
  const auto t = smp_forward(smp, fork, permute_rows(obs, {0, 2, 1}));
  const double witness = std::max(std::abs(s[1] - t[2]), std::abs(s[2] - t[1]));
  v.expect(witness >= 1e-3, "smp witness difference only " + fmt(witness));
  return v.outcome("100 permutations, max deviation actor " + fmt(worst_action, 3) + " mask " + fmt(worst_mask, 3) +
                   " critic " + fmt(worst_value, 3) + "; smp witness " + fmt(witness, 3));
}

// ---------------------------------------------------------------------------
// 4. Topology independence vs locality

Outcome topology_locality(const Context&) {
  Verdict v;
  std::mt19937_64 rng(404);
  std::vector<MorphGraph> graphs;
  for (std::size_t links = 1; links <= 6; ++links) graphs.push_back(build_chain_morphology(links));
  graphs.push_back(branching());
  const std::vector<TopologyScheme> schemes{TopologyScheme::morphology, TopologyScheme::star, TopologyScheme::line,
                                            TopologyScheme::full};

  std::size_t comparisons = 0;
  for (NetRole role : {NetRole::actor, NetRole::critic}) {
    const auto net = init_policy<float>(PolicyConfig{}, role, 7);
    for (const MorphGraph& g : graphs) {
      const std::size_t batch = 3;
      const Tensor<float> x = random_tensor<float>({batch * g.node_count(), net->input_width()}, rng);
      const Tensor<float> ref = net->forward(g, batch, x);
      for (TopologyScheme s : schemes) {
        const Tensor<float> y = net->forward(make_topology(g, s), batch, x);
        v.expect(bit_equal(y.values(), ref.values()), "amorpheus output changed under " + std::string(to_string(s)));
        ++comparisons;
      }
    }
  }

  // One message pass: perturbing node k moves only k and its in-neighbour receivers.
  PolicyConfig cfg = narrow(Arch::nervenet);
  cfg.message_passes = 1;
  double worst_far = 0.0;
  std::size_t probes = 0, near_moved = 0, near_total = 0;
  for (NetRole role : {NetRole::actor, NetRole::critic}) {
    const auto net = init_policy<double>(cfg, role, 8);
    for (const MorphGraph& base : graphs) {
      for (TopologyScheme s : schemes) {
        const MorphGraph g = make_topology(base, s);
        const std::size_t n = g.node_count();
        const Tensor<double> x = random_tensor<double>({n, net->input_width()}, rng);
        const Tensor<double> ref = net->forward(g, 1, x);
        for (std::size_t k = 0; k < n; ++k) {
          Tensor<double> bumped = x.clone();
          for (std::size_t f = 0; f < net->input_width(); ++f) bumped.values_mut()[k * net->input_width() + f] += 0.3;
          const Tensor<double> y = net->forward(g, 1, bumped);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = std::abs(y[i] - ref[i]);
            if (i == k || g.has_edge(k, i)) {
              ++near_total;
              near_moved += d > 0.0;
            } else {
              worst_far = std::max(worst_far, d);
            }
          }
          ++probes;
        }
      }
    }
  }
  v.expect(worst_far <= 1e-12, "nervenet output moved " + fmt(worst_far) + " beyond one hop");
  return v.outcome(std::to_string(comparisons) + " amorpheus comparisons bit-identical; nervenet T=1: " +
                   std::to_string(probes) + " perturbations, max change beyond 1 hop " + fmt(worst_far, 3) + ", " +
                   std::to_string(near_moved) + "/" + std::to_string(near_total) + " near outputs moved");
}

// ---------------------------------------------------------------------------
// 5. Structural gates

template <typename E, typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome structural_gates(const Context& ctx) {
  Verdict v;
  std::mt19937_64 rng(505);
  const auto net = init_policy<float>(narrow(Arch::smp), NetRole::actor, 1);
  const auto& smp = dynamic_cast<const SmpNet<float>&>(*net);
  std::size_t checks = 0;
  for (std::size_t links = 2; links <= 6; ++links) {
    const MorphGraph chain = build_chain_morphology(links);
    const Tensor<float> obs = random_tensor<float>({links + 1, kObsWidth}, rng);
    v.expect(throws<StructuralError>([&] { smp_forward(smp, make_topology(chain, TopologyScheme::full), obs); }),
             "full graph accepted on " + std::to_string(links + 1) + " nodes");
    const MorphGraph star = make_topology(chain, TopologyScheme::star);
    if (links > 2) {
      v.expect(throws<CapacityError>([&] { smp_forward(smp, star, obs); }),
               "star fan-out " + std::to_string(links) + " accepted");
    }
    v.expect(!throws<std::exception>([&] { smp_forward(smp, chain, obs); }), "chain rejected");
    checks += 3;
  }
  // A cycle and a disconnected graph are not trees either.
  const MorphGraph cycle(3, {"a", "b", "c"}, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 0}, {0, 2}}, 0);
  v.expect(throws<StructuralError>([&] { smp_forward(smp, cycle, random_tensor<float>({3, kObsWidth}, rng)); }),
           "cycle accepted");
  v.expect(throws<StructuralError>([&] {
             const MorphGraph split(4, {"a", "b", "c", "d"}, {{0, 1}, {1, 0}, {2, 3}, {3, 2}}, 0);
             smp_forward(smp, split, random_tensor<float>({4, kObsWidth}, rng));
           }),
           "disconnected graph accepted");

  // Trainer gate: rejected before any directory, file or step.
  TrainConfig cfg;
  cfg.policy = narrow(Arch::smp);
  cfg.topology = TopologyScheme::full;
  cfg.total_steps = 10;
  const fs::path run = ctx.work / "c5_smp_full";
  fs::remove_all(run);
  v.expect(throws<ConfigError>([&] { mtrl_train(cfg, 0, run); }), "trainer accepted (smp, full)");
  v.expect(!fs::exists(run), "trainer created " + run.string() + " before rejecting");
  cfg.topology = TopologyScheme::star;
  cfg.tasks = {make_env(Archetype::chain_walker, 4)};
  v.expect(throws<CapacityError>([&] { mtrl_train(cfg, 0, run); }), "trainer accepted star fan-out 4 with K=2");
  v.expect(!fs::exists(run), "trainer created the run directory for a capacity failure");
  AblationGrid grid;
  grid.archs = {Arch::smp};
  grid.topologies = {TopologyScheme::full};
  grid.base.total_steps = 10;
  const AblationResult r = ablation_harness(grid, fresh_dir(ctx.work / "c5_grid"));
  v.expect(r.cells.size() == 1 && r.cells[0].status == CellStatus::skipped, "grid did not record (smp, full) as skipped");
  return v.outcome(std::to_string(checks + 8) + " gate checks");
}

// ---------------------------------------------------------------------------
// 6. Desk-scale learning

Outcome desk_learning(const Context& ctx) {
  Verdict v;
  TrainConfig cfg;
  cfg.tasks = {make_env(Archetype::chain_walker, 2)};
  cfg.policy.arch = Arch::amorpheus;
  cfg.total_steps = ctx.learning_steps;
  cfg.final_eval_rollouts = 100;
  cfg.seeds = {0, 1, 2};
  const ReturnStats random = random_policy_baseline(cfg.tasks[0], 100, 0);
  const auto runs = train_seeds(cfg, fresh_dir(ctx.work / "c6"), ctx.jobs, &std::cerr);

  double mean = 0.0, slowest = 0.0, total = 0.0;
  std::string per_seed;
  for (const TrainResult& r : runs) {
    mean += r.final_eval.mtrl_return / static_cast<double>(runs.size());
    slowest = std::max(slowest, r.seconds);
    total += r.seconds;
    per_seed += (per_seed.empty() ? "" : ", ") + fmt(r.final_eval.mtrl_return, 5);
  }
  const double ratio = mean / random.mean;
  v.expect(ratio >= 5.0, "mean final return only " + fmt(ratio, 3) + "x random");
  // On a 4-core desktop the three seeds train side by side, so the wall
  // time is that of the slowest seed.
  v.expect(slowest <= 7200.0, "slowest seed took " + fmt(slowest, 5) + " s");
  return v.outcome(std::to_string(cfg.total_steps) + " steps x 3 seeds: final returns [" + per_seed + "], mean " +
                   fmt(mean, 5) + " vs random " + fmt(random.mean, 5) + " +- " + fmt(random.std_error, 3) + " (" +
                   fmt(ratio, 3) + "x); seed wall time max " + fmt(slowest, 5) + " s, sum " + fmt(total, 5) + " s");
}

// ---------------------------------------------------------------------------
// 7. MTRL + zero-shot

Outcome mtrl_zero_shot(const Context& ctx) {
  Verdict v;
  TrainConfig cfg;
  cfg.tasks = parse_task_list("chain-walker:2,chain-walker:3,chain-walker:4");
  cfg.total_steps = 10000;
  cfg.eval_every = 2500;
  cfg.final_eval_rollouts = 100;
  const fs::path dir = fresh_dir(ctx.work / "c7");
  const TrainResult run = mtrl_train(cfg, 0, dir, &std::cerr);
  v.expect(fs::exists(run.final_checkpoint), "no final checkpoint");

  const auto tasks = parse_task_list("chain-walker:2,chain-walker:3,chain-walker:4,chain-walker:5");
  const EvalResult r = evaluate(run.final_checkpoint, tasks, 100, 0);
  std::ofstream csv(dir / "zero_shot.csv");
  csv << "task,held_out,return_mean,return_stderr,rollouts\n";
  std::string listing;
  for (std::size_t t = 0; t < r.tasks.size(); ++t) {
    const ReturnStats& s = r.per_task[t];
    const bool held_out = t == 3;
    csv << r.tasks[t] << ',' << held_out << ',' << format_double(s.mean) << ',' << format_double(s.std_error) << ','
        << s.returns.size() << '\n';
    listing += (listing.empty() ? "" : ", ") + r.tasks[t] + (held_out ? "*" : "") + " " + fmt(s.mean, 4) + " +- " +
               fmt(s.std_error, 2);
    v.expect(s.returns.size() == 100, r.tasks[t] + " has " + std::to_string(s.returns.size()) + " rollouts");
    v.expect(std::isfinite(s.mean) && std::isfinite(s.std_error), r.tasks[t] + " is not finite");
  }
  v.expect(r.tasks.size() == 4, "expected 4 evaluated tasks");
  return v.outcome("one checkpoint for {2,3,4}; 100 rollouts each: " + listing + " (* held out)");
}

// ---------------------------------------------------------------------------
// 8. Ablation harness

Outcome ablation_grid(const Context& ctx) {
  Verdict v;
  AblationGrid grid;
  grid.archs = {Arch::nervenet};
  grid.topologies = {TopologyScheme::morphology, TopologyScheme::star, TopologyScheme::line, TopologyScheme::full};
  grid.base.tasks = parse_task_list("chain-walker:2,chain-walker:3");
  grid.base.total_steps = 5000;
  grid.base.eval_every = 1000;
  grid.base.eval_rollouts = 5;
  grid.base.final_eval_rollouts = 20;
  grid.base.seeds = {0, 1, 2};
  const AblationResult r = ablation_harness(grid, fresh_dir(ctx.work / "c8"), ctx.jobs, &std::cerr);

  std::string listing;
  v.expect(r.cells.size() == 4, "expected 4 cells");
  for (const CellOutcome& c : r.cells) {
    v.expect(c.status == CellStatus::ok, std::string(to_string(c.topology)) + " " + std::string(to_string(c.status)) +
                                             ": " + c.message);
    v.expect(c.runs.size() == 3, std::string(to_string(c.topology)) + " has " + std::to_string(c.runs.size()) + " seeds");
    v.expect(!c.mean.empty() && c.mean.size() == c.std_error.size(), "missing curve");
    listing += (listing.empty() ? "" : ", ") + std::string(to_string(c.topology)) + " " + fmt(c.final_mean, 4) + " +- " +
               fmt(c.final_std_error, 2);
  }
  for (const fs::path& p : {r.curves_csv, r.summary_csv, r.summary_curves_csv, r.plot_svg})
    v.expect(fs::exists(p) && fs::file_size(p) > 0, p.filename().string() + " missing");
  const std::string svg = slurp(r.plot_svg);
  v.expect(svg.find("<svg") != std::string::npos && svg.find("</svg>") != std::string::npos, "plot is not an svg");

  // Header plus four rows, each with three seeds.
  std::istringstream summary(slurp(r.summary_csv));
  std::string line;
  std::getline(summary, line);
  std::size_t rows = 0;
  while (std::getline(summary, line)) {
    ++rows;
    v.expect(line.find(",ok,3,") != std::string::npos, "summary row '" + line + "'");
  }
  v.expect(rows == 4, "summary has " + std::to_string(rows) + " rows");
  return v.outcome("nervenet x 4 topologies x 3 seeds, final mean +- stderr: " + listing);
}

// ---------------------------------------------------------------------------
// 9. Determinism and persistence

Outcome determinism(const Context& ctx) {
  Verdict v;
  TrainConfig cfg;
  cfg.tasks = parse_task_list("chain-walker:2,chain-walker:3");
  cfg.total_steps = 2000;
  cfg.warmup_steps = 500;
  cfg.eval_every = 500;
  cfg.eval_rollouts = 3;
  cfg.final_eval_rollouts = 5;
  const TrainResult a = mtrl_train(cfg, 7, fresh_dir(ctx.work / "c9_a"));
  const TrainResult b = mtrl_train(cfg, 7, fresh_dir(ctx.work / "c9_b"));
  v.expect(slurp(a.metrics) == slurp(b.metrics), "metrics.csv differs between identical runs");
  v.expect(slurp(payload_path(a.final_checkpoint)) == slurp(payload_path(b.final_checkpoint)),
           "final checkpoints differ");

  // The saved actor reproduces the in-run final evaluation exactly.
  const EvalResult reloaded = evaluate(a.final_checkpoint, cfg.tasks, cfg.final_eval_rollouts, derive_seed(7, 4));
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    v.expect(reloaded.per_task[t].returns == a.final_eval.per_task[t].returns,
             "reloaded returns differ on " + reloaded.tasks[t]);
  }

  // Trained weights of every family survive save / load bit for bit.
  std::mt19937_64 rng(909);
  std::size_t compared = 0;
  for (Arch arch : {Arch::amorpheus, Arch::nervenet, Arch::smp}) {
    const EnvSpec spec = make_env(Archetype::chain_walker, 2);
    Agent agent = make_agent(PolicyConfig{.arch = arch}, Td3Config{.learning_rate = 1e-3}, 9);
    std::vector<Transition> batch;
    for (int i = 0; i < 16; ++i) {
      auto [state, obs] = reset(spec, rng());
      std::vector<double> act(3);
      for (auto& x : act) x = std::uniform_real_distribution<double>(-1, 1)(rng);
      const StepResult s = step(spec, state, act);
      batch.push_back({obs, act, s.reward, s.obs, s.fell, 0});
    }
    for (int k = 0; k < 10; ++k) td3_update(agent, spec.morphology(), batch);
    const fs::path ckpt = ctx.work / ("c9_" + std::string(to_string(arch)) + ".ckpt");
    save_policy(ckpt, *agent.actor, TopologyScheme::morphology, {});
    const LoadedPolicy loaded = load_policy(ckpt);
    for (std::size_t links : {2u, 4u}) {
      const MorphGraph g = build_chain_morphology(links);
      const std::size_t graphs = 8;
      const Tensor<float> obs = random_tensor<float>({graphs * g.node_count(), kObsWidth}, rng);
      const std::vector<float> flat(obs.values().begin(), obs.values().end());
      const auto x = act(*agent.actor, g, graphs, flat);
      const auto y = act(*loaded.actor, g, graphs, flat);
      v.expect(bit_equal(x, y), std::string(to_string(arch)) + " actions differ after reload");
      compared += x.size();
    }
  }
  return v.outcome("metrics.csv and final checkpoint byte-identical across reruns; reloaded evaluation exact; " +
                   std::to_string(compared) + " reloaded actions bit-identical");
}

// ---------------------------------------------------------------------------
// 10. Analysis pipeline

Outcome analysis_pipeline(const Context& ctx) {
  Verdict v;
  TrainConfig cfg;
  cfg.tasks = {make_env(Archetype::chain_walker, 6)};
  cfg.total_steps = 5000;
  cfg.eval_every = 2500;
  cfg.final_eval_rollouts = 10;
  const fs::path dir = fresh_dir(ctx.work / "c10");
  const TrainResult run = mtrl_train(cfg, 0, dir / "train", &std::cerr);

  const fs::path series_dir = fresh_dir(dir / "masks");
  const RecordResult rec = record_masks(run.final_checkpoint, cfg.tasks[0], 2, 0, series_dir);
  const std::size_t n = cfg.tasks[0].node_count();
  v.expect(n == 7, "task does not have 7 nodes");
  double worst_row = 0, worst_colsum = 0, min_weight = 1;
  std::size_t masks = 0, monotone_breaks = 0;
  for (const MaskSeries& s : rec.series) {
    for (const MaskRecord& r : s.records) {
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < n; ++j) {
          row += r.weights[i * n + j];
          min_weight = std::min(min_weight, r.weights[i * n + j]);
        }
        worst_row = std::max(worst_row, std::abs(row - 1.0));
      }
      const auto cs = columnwise_sum(r.weights, n);
      worst_colsum = std::max(worst_colsum, std::abs(std::accumulate(cs.begin(), cs.end(), 0.0) - double(n)));
      ++masks;
    }
    const auto c = cumulative_change(s);
    for (std::size_t t = 1; t < c.size(); ++t) monotone_breaks += c[t] < c[t - 1];
  }
  // Masks come from a float32 network.
  v.expect(worst_row <= 1e-5, "row sum off by " + fmt(worst_row));
  v.expect(min_weight >= 0.0, "negative attention weight");
  v.expect(worst_colsum <= 1e-4, "column sums off by " + fmt(worst_colsum));
  v.expect(monotone_breaks == 0, std::to_string(monotone_breaks) + " decreases in cumulative change");

  ReportRequest req;
  const std::size_t steps = rec.series.front().records.size();
  req.snapshot_steps = {0, steps / 2, steps - 1};
  req.column_sums = true;
  req.cumulative = true;
  std::vector<fs::path> files;
  try {
    files = export_report(series_dir, dir / "report", req);
  } catch (const std::exception& e) {
    v.expect(false, std::string("report export threw: ") + e.what());
  }
  for (const auto& f : files) v.expect(fs::exists(f) && fs::file_size(f) > 0, f.filename().string() + " empty");
  return v.outcome(std::to_string(masks) + " masks over " + std::to_string(steps) + " steps, max |row sum - 1| " +
                   fmt(worst_row, 3) + ", max |sum colsum - 7| " + fmt(worst_colsum, 3) + ", " +
                   std::to_string(files.size()) + " report files");
}

// ---------------------------------------------------------------------------
// 11. Physics sanity

// Mechanical energy from the joint state, by forward kinematics of the point
// masses on top of the skid.
double chain_energy(const EnvSpec& spec, const EnvState& s) {
  const auto& p = spec.physics;
  double y = 0.0, vx = s.base_velocity, vy = 0.0, phi = 0.0, omega = 0.0;
  double e = 0.5 * p.skid_mass * vx * vx;
  for (std::size_t j = 0; j < spec.n_links; ++j) {
    phi += s.joint_angle[j];
    omega += s.joint_velocity[j];
    y += p.segment_length * std::cos(phi);
    vx += p.segment_length * omega * std::cos(phi);
    vy -= p.segment_length * omega * std::sin(phi);
    const double m = j + 1 == spec.n_links ? p.torso_mass : p.link_mass;
    e += 0.5 * m * (vx * vx + vy * vy) + m * p.gravity * y;
  }
  return e;
}

Outcome physics_sanity(const Context&) {
  Verdict v;
  double worst_drift = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    EnvSpec spec = make_env(Archetype::chain_walker, n);
    spec.physics = PhysicsParams::undamped();
    EnvState s = reset(spec, 0, false).state;
    s.joint_angle[0] = std::numbers::pi - 0.4;
    for (std::size_t j = 1; j < n; ++j) s.joint_angle[j] = 0.1 * static_cast<double>(j);
    const double e0 = chain_energy(spec, s);
    double drift = 0;
    bool clipped = false;
    for (int t = 0; t < 200; ++t) {
      s = step(spec, s, std::vector<double>(n + 1, 0.0)).state;
      drift = std::max(drift, std::abs(chain_energy(spec, s) - e0) / std::abs(e0));
      for (double w : s.joint_velocity) clipped |= std::abs(w) >= spec.physics.max_joint_speed;
    }
    v.expect(!clipped, std::to_string(n) + "-link run hit the joint speed clip");
    v.expect(drift <= 0.01, std::to_string(n) + "-link energy drift " + fmt(drift));
    worst_drift = std::max(worst_drift, drift);
  }

  const EnvSpec spec = make_env(Archetype::chain_walker, 3);
  const EnvState rest = reset(spec, 0, false).state;
  const double alive = step(spec, rest, std::vector<double>(4, 0.0)).reward;
  v.expect(alive == 1.0, "reward at rest " + fmt(alive, 17));
  EnvSpec still = spec;
  still.torque_limit = 0.0;
  const double penalised = step(still, rest, {0.0, 1.0, -0.5, 0.25}).reward;
  const double expected = 1.0 - 0.05 * (1.0 + 0.25 + 0.0625);
  v.expect(std::abs(penalised - expected) <= 1e-12, "penalised reward " + fmt(penalised, 17));
  return v.outcome("max energy drift " + fmt(100 * worst_drift, 3) + "% over 200 steps (1-4 links); alive reward " +
                   fmt(alive) + ", penalised reward " + fmt(penalised, 6) + " (expected " + fmt(expected, 6) + ")");
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  ctx.work = fs::temp_directory_path() / "amorph_acceptance";
  std::vector<int> selected;
  app.add_option("--jobs", ctx.jobs, "Training runs at a time (capped at the core count)")->check(CLI::PositiveNumber);
  app.add_option("--work", ctx.work, "Scratch directory for runs");
  app.add_option("--learning-steps", ctx.learning_steps, "Steps per seed for criterion 6 (harness smoke tests only)");
  app.add_option("criteria", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  ctx.jobs = std::min<std::size_t>(ctx.jobs, std::max(1u, std::thread::hardware_concurrency()));
  fs::create_directories(ctx.work);

  const std::vector<Criterion> all{
      {1, "gradient oracle", gradient_oracle},
      {2, "attention contract", attention_contract},
      {3, "permutation equivariance", permutation_equivariance},
      {4, "topology independence / locality", topology_locality},
      {5, "structural gates", structural_gates},
      {11, "physics sanity", physics_sanity},
      {9, "determinism and persistence", determinism},
      {10, "analysis pipeline", analysis_pipeline},
      {7, "MTRL + zero-shot", mtrl_zero_shot},
      {8, "ablation harness", ablation_grid},
      {6, "desk-scale learning", desk_learning},
  };

  std::vector<std::pair<int, std::string>> lines;
  bool all_pass = true;
  for (const Criterion& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " C" << c.id << " " << c.name << ": " << o.detail << " ["
         << std::fixed << std::setprecision(1) << seconds_since(t0) << " s]";
    std::cout << line.str() << std::endl;
    lines.emplace_back(c.id, line.str());
    all_pass &= o.pass;
  }

  std::sort(lines.begin(), lines.end());
  std::cout << "\nsummary\n";
  for (const auto& [id, text] : lines) std::cout << text << '\n';
  return all_pass ? 0 : 1;
}
