#include "amorph/nn.hpp"

#include <cmath>

#include "amorph/errors.hpp"
#include "amorph/ops.hpp"

namespace amorph {

namespace {

template <typename T>
Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(numel(shape));
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

void require_width(const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": input width " + std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

}  // namespace

template <typename T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  Linear l;
  l.weight = uniform<T>({in, out}, bound, rng);
  l.bias = uniform<T>({out}, bound, rng);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  if (x.rank() == 0) throw DimensionError("linear layer on a scalar");
  require_width("linear", x.shape().back(), in_features());
  return ops::add(ops::matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
MlpParams<T> MlpParams<T>::init(const std::vector<std::size_t>& sizes, Activation hidden, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  MlpParams p;
  p.hidden = hidden;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) p.layers.push_back(Linear<T>::init(sizes[i], sizes[i + 1], rng));
  return p;
}

template <typename T>
void MlpParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::tanh: return ops::tanh(x);
    case Activation::relu: return ops::relu(x);
    case Activation::identity: return x;
  }
  return x;
}

template <typename T>
Tensor<T> mlp_forward(const MlpParams<T>& p, const Tensor<T>& x) {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    h = p.layers[i].forward(h);
    if (i + 1 < p.layers.size()) h = activate(h, p.hidden);
  }
  return h;
}

template <typename T>
GruParams<T> GruParams<T>::init(std::size_t input, std::size_t hidden, Rng& rng) {
  GruParams p;
  p.input_update = Linear<T>::init(input, hidden, rng);
  p.input_reset = Linear<T>::init(input, hidden, rng);
  p.input_candidate = Linear<T>::init(input, hidden, rng);
  p.hidden_update = Linear<T>::init(hidden, hidden, rng);
  p.hidden_reset = Linear<T>::init(hidden, hidden, rng);
  p.hidden_candidate = Linear<T>::init(hidden, hidden, rng);
  return p;
}

template <typename T>
void GruParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  input_update.collect(prefix + ".input_update", out);
  input_reset.collect(prefix + ".input_reset", out);
  input_candidate.collect(prefix + ".input_candidate", out);
  hidden_update.collect(prefix + ".hidden_update", out);
  hidden_reset.collect(prefix + ".hidden_reset", out);
  hidden_candidate.collect(prefix + ".hidden_candidate", out);
}

template <typename T>
Tensor<T> gru_cell_forward(const GruParams<T>& p, const Tensor<T>& h, const Tensor<T>& x) {
  if (h.rank() != 2 || x.rank() != 2 || h.dim(0) != x.dim(0)) {
    throw DimensionError("gru: state " + shape_str(h.shape()) + " and input " + shape_str(x.shape()) +
                         " must be matrices with equal row counts");
  }
  require_width("gru state", h.dim(1), p.hidden_size());
  using namespace ops;
  Tensor<T> z = sigmoid(add(p.input_update.forward(x), p.hidden_update.forward(h)));
  Tensor<T> r = sigmoid(add(p.input_reset.forward(x), p.hidden_reset.forward(h)));
  Tensor<T> c = tanh(add(p.input_candidate.forward(x), mul(r, p.hidden_candidate.forward(h))));
  return add(c, mul(z, sub(h, c)));
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::init(std::size_t width) {
  LayerNormParams p;
  p.gain = Tensor<T>(Shape{width}, std::vector<T>(width, T(1)), true);
  p.bias = Tensor<T>::zeros(Shape{width}, true);
  return p;
}

template <typename T>
void LayerNormParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Tensor<T> layer_norm_forward(const LayerNormParams<T>& p, const Tensor<T>& x) {
  return ops::add(ops::mul(ops::layer_norm(x, 1e-5), p.gain), p.bias);
}

template <typename T>
AttentionParams<T> AttentionParams<T>::init(std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("attention: head count " + std::to_string(heads) + " must divide width " +
                                std::to_string(width));
  }
  AttentionParams p;
  p.heads = heads;
  p.query = Linear<T>::init(width, width, rng);
  p.key = Linear<T>::init(width, width, rng);
  p.value = Linear<T>::init(width, width, rng);
  p.output = Linear<T>::init(width, width, rng);
  return p;
}

template <typename T>
void AttentionParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

template <typename T>
AttentionOutput<T> multihead_attention(const AttentionParams<T>& p, const Tensor<T>& x, std::size_t graphs,
                                       std::size_t nodes) {
  using namespace ops;
  if (nodes == 0 || graphs == 0) throw std::invalid_argument("attention over an empty node set");
  if (x.rank() != 2 || x.dim(0) != graphs * nodes) {
    throw DimensionError("attention: input " + shape_str(x.shape()) + " does not stack " +
                         std::to_string(graphs) + " graphs of " + std::to_string(nodes) + " nodes");
  }
  const std::size_t d = p.head_dim();
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  Tensor<T> q = p.query.forward(x);
  Tensor<T> k = p.key.forward(x);
  Tensor<T> v = p.value.forward(x);

  AttentionOutput<T> out;
  std::vector<Tensor<T>> heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t lo = h * d, hi = lo + d;
    Tensor<T> qh = reshape(slice(q, 1, lo, hi), {graphs, nodes, d});
    Tensor<T> kh = reshape(slice(k, 1, lo, hi), {graphs, nodes, d});
    Tensor<T> vh = reshape(slice(v, 1, lo, hi), {graphs, nodes, d});
    Tensor<T> mask = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
    heads.push_back(reshape(matmul(mask, vh), {graphs * nodes, d}));
    out.masks.push_back(mask);
  }
  out.values = p.output.forward(heads.size() == 1 ? heads.front() : concat(heads));
  return out;
}

template <typename T>
TransformerBlockParams<T> TransformerBlockParams<T>::init(std::size_t width, std::size_t heads, std::size_t hidden,
                                                          Rng& rng) {
  TransformerBlockParams p;
  p.attention = AttentionParams<T>::init(width, heads, rng);
  p.feedforward = MlpParams<T>::init({width, hidden, width}, Activation::relu, rng);
  p.norm1 = LayerNormParams<T>::init(width);
  p.norm2 = LayerNormParams<T>::init(width);
  return p;
}

template <typename T>
void TransformerBlockParams<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  attention.collect(prefix + ".attention", out);
  feedforward.collect(prefix + ".feedforward", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
}

template <typename T>
AttentionOutput<T> transformer_block(const TransformerBlockParams<T>& p, const Tensor<T>& x, std::size_t graphs,
                                     std::size_t nodes) {
  if (x.rank() != 2) throw DimensionError("transformer block input must be a matrix, got " + shape_str(x.shape()));
  require_width("transformer block", x.dim(1), p.width());
  AttentionOutput<T> attn = multihead_attention(p.attention, x, graphs, nodes);
  Tensor<T> a = layer_norm_forward(p.norm1, ops::add(x, attn.values));
  attn.values = layer_norm_forward(p.norm2, ops::add(a, mlp_forward(p.feedforward, a)));
  return attn;
}

#define AMORPH_INSTANTIATE_NN(T)                                                                              \
  template struct Linear<T>;                                                                                 \
  template struct MlpParams<T>;                                                                              \
  template struct GruParams<T>;                                                                              \
  template struct LayerNormParams<T>;                                                                        \
  template struct AttentionParams<T>;                                                                        \
  template struct TransformerBlockParams<T>;                                                                 \
  template Tensor<T> mlp_forward(const MlpParams<T>&, const Tensor<T>&);                                     \
  template Tensor<T> activate(const Tensor<T>&, Activation);                                                 \
  template Tensor<T> gru_cell_forward(const GruParams<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> layer_norm_forward(const LayerNormParams<T>&, const Tensor<T>&);                        \
  template AttentionOutput<T> multihead_attention(const AttentionParams<T>&, const Tensor<T>&, std::size_t,  \
                                                  std::size_t);                                              \
  template AttentionOutput<T> transformer_block(const TransformerBlockParams<T>&, const Tensor<T>&,          \
                                                std::size_t, std::size_t);

AMORPH_INSTANTIATE_NN(float)
AMORPH_INSTANTIATE_NN(double)

}  // namespace amorph
