#pragma once

#include <span>
#include <vector>

#include "amorph/tensor.hpp"

// Differentiable primitives. Each records an adjoint on the active tape when
// one is set and at least one input requires a gradient; values are computed
// identically either way.
namespace amorph::ops {

/// (m,k)x(k,n), (B,m,k)x(k,n), (m,k)x(B,k,n) or (B,m,k)x(B,k,n).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise; `b` may also match a trailing suffix of a's shape (broadcast).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// Concatenation along the last axis.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// Half-open range [begin, end) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

/// Softmax along the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);

/// Normalisation along the last axis, without gain/bias: (x - mean) / sqrt(var + eps).
template <typename T> Tensor<T> layer_norm(const Tensor<T>& a, double eps = 1e-5);

/// Reductions to a scalar (shape []).
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

/// Same values, new shape with equal element count.
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

}  // namespace amorph::ops
