#pragma once

#include <random>
#include <string>
#include <vector>

#include "amorph/checkpoint.hpp"
#include "amorph/tensor.hpp"

namespace amorph {

using Rng = std::mt19937_64;

enum class Activation { tanh, relu, identity };

/// y = x W + b with W of shape (in, out). Rows of x are independent items.
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  /// Weights and bias uniform in +-sqrt(1/in).
  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
struct MlpParams {
  std::vector<Linear<T>> layers;
  Activation hidden = Activation::tanh;

  /// sizes = {in, h1, ..., out}; the output layer is linear.
  static MlpParams init(const std::vector<std::size_t>& sizes, Activation hidden, Rng& rng);
  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> mlp_forward(const MlpParams<T>& p, const Tensor<T>& x);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act);

/// Gated recurrent unit, one linear map per gate and path:
///   z = sigmoid(x Wxz + h Whz), r = sigmoid(x Wxr + h Whr)
///   c = tanh(x Wxc + r * (h Whc)),  h' = (1 - z) * c + z * h
template <typename T>
struct GruParams {
  Linear<T> input_update, input_reset, input_candidate;
  Linear<T> hidden_update, hidden_reset, hidden_candidate;

  static GruParams init(std::size_t input, std::size_t hidden, Rng& rng);
  std::size_t hidden_size() const { return hidden_update.out_features(); }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> gru_cell_forward(const GruParams<T>& p, const Tensor<T>& h, const Tensor<T>& x);

/// Affine gain and bias applied after normalisation.
template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNormParams init(std::size_t width);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
Tensor<T> layer_norm_forward(const LayerNormParams<T>& p, const Tensor<T>& x);

/// Query/key/value/output projections, all width x width. Head h uses columns
/// [h*width/heads, (h+1)*width/heads) of the query, key and value projections.
template <typename T>
struct AttentionParams {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  static AttentionParams init(std::size_t width, std::size_t heads, Rng& rng);
  std::size_t width() const { return query.in_features(); }
  std::size_t head_dim() const { return width() / heads; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

template <typename T>
struct AttentionOutput {
  Tensor<T> values;              // (graphs * nodes, width)
  std::vector<Tensor<T>> masks;  // one (graphs, nodes, nodes) per head, rows sum to 1
};

/// Scaled dot-product self-attention over every node of each graph, no masking.
/// `x` stacks `graphs` graphs of `nodes` rows each.
template <typename T>
AttentionOutput<T> multihead_attention(const AttentionParams<T>& p, const Tensor<T>& x, std::size_t graphs,
                                       std::size_t nodes);

template <typename T>
struct TransformerBlockParams {
  AttentionParams<T> attention;
  MlpParams<T> feedforward;  // width -> hidden (relu) -> width
  LayerNormParams<T> norm1, norm2;

  static TransformerBlockParams init(std::size_t width, std::size_t heads, std::size_t hidden, Rng& rng);
  std::size_t width() const { return attention.width(); }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

/// Post-norm encoder layer: a = LN1(x + MHA(x)); out = LN2(a + FF(a)).
template <typename T>
AttentionOutput<T> transformer_block(const TransformerBlockParams<T>& p, const Tensor<T>& x, std::size_t graphs,
                                     std::size_t nodes);

}  // namespace amorph
