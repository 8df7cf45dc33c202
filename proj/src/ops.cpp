#include "amorph/ops.hpp"

// Eigen's coefficient-based kernel for tiny products peels loops by the
// address alignment of the operands, so identical inputs at different heap
// addresses could differ in the last bit. The blocked GEMM path does not.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 1
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "amorph/errors.hpp"

namespace amorph::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, bool track) {
  return Tensor<T>(std::move(shape), std::move(values), track);
}

template <typename T>
void record(Tensor<T> out, std::function<void()> adjoint) {
  active_tape<T>()->record(std::move(out), std::move(adjoint));
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

bool is_suffix(const Shape& whole, const Shape& tail) {
  if (tail.size() > whole.size()) return false;
  return std::equal(tail.begin(), tail.end(), whole.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T>& a, F forward, G derivative) {
  const bool track = tracking<T>({&a});
  auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i]);
  Tensor<T> y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record<T>(y, [a, y, derivative]() mutable {
      auto g = a.grad_mut();
      auto gy = y.grad();
      auto yv = y.values();
      auto xv = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * derivative(xv[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3) mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  const std::size_t batch_a = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t batch_b = b.rank() == 3 ? b.dim(0) : 1;
  if (k != kb) mismatch("matmul", a.shape(), b.shape());
  if (a.rank() == 3 && b.rank() == 3 && batch_a != batch_b) mismatch("matmul", a.shape(), b.shape());

  const bool track = tracking<T>({&a, &b});
  Shape out_shape;
  if (a.rank() == 3 || b.rank() == 3) out_shape.push_back(std::max(batch_a, batch_b));
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(numel(out_shape));

  // Broadcast weight over a batch of row blocks: one GEMM over all rows.
  const bool flatten = b.rank() == 2;
  const std::size_t rows = flatten ? batch_a * m : m;
  const std::size_t batches = flatten ? 1 : std::max(batch_a, batch_b);
  const std::size_t stride_a = (a.rank() == 3 && !flatten) ? m * k : 0;
  const std::size_t stride_b = b.rank() == 3 ? k * n : 0;
  for (std::size_t s = 0; s < batches; ++s) {
    ConstMatMap<T> am(a.values().data() + s * stride_a, rows, k);
    ConstMatMap<T> bm(b.values().data() + s * stride_b, k, n);
    MatMap<T> om(out.data() + s * rows * n, rows, n);
    om.noalias() = am * bm;
  }
  Tensor<T> y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>(y, [a, b, y, rows, k, n, batches, stride_a, stride_b]() mutable {
      for (std::size_t s = 0; s < batches; ++s) {
        ConstMatMap<T> gy(y.grad().data() + s * rows * n, rows, n);
        if (a.requires_grad()) {
          ConstMatMap<T> bm(b.values().data() + s * stride_b, k, n);
          MatMap<T> ga(a.grad_mut().data() + s * stride_a, rows, k);
          ga.noalias() += gy * bm.transpose();
        }
        if (b.requires_grad()) {
          ConstMatMap<T> am(a.values().data() + s * stride_a, rows, k);
          MatMap<T> gb(b.grad_mut().data() + s * stride_b, k, n);
          gb.noalias() += am.transpose() * gy;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape())) mismatch("add", a.shape(), b.shape());
  const bool track = tracking<T>({&a, &b});
  auto av = a.values();
  auto bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); i += inner) {
    for (std::size_t j = 0; j < inner; ++j) out[i + j] = av[i + j] + bv[j];
  }
  Tensor<T> y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record<T>(y, [a, b, y, inner]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < gy.size(); i += inner) {
          for (std::size_t j = 0; j < inner; ++j) gb[j] += gy[i + j];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape())) mismatch("mul", a.shape(), b.shape());
  const bool track = tracking<T>({&a, &b});
  auto av = a.values();
  auto bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); i += inner) {
    for (std::size_t j = 0; j < inner; ++j) out[i + j] = av[i + j] * bv[j];
  }
  Tensor<T> y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record<T>(y, [a, b, y, inner]() mutable {
      auto gy = y.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < ga.size(); i += inner) {
          for (std::size_t j = 0; j < inner; ++j) ga[i + j] += gy[i + j] * bv[j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < gy.size(); i += inner) {
          for (std::size_t j = 0; j < inner; ++j) gb[j] += gy[i + j] * av[i + j];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat of scalars");
  Shape lead(first.begin(), first.end() - 1);
  std::size_t width = 0;
  bool track = false;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      mismatch("concat", first, s);
    }
    widths.push_back(s.back());
    width += s.back();
    track = track || tracking<T>({&p});
  }
  const std::size_t rows = numel(lead);
  std::vector<T> out(rows * width);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * w, w, out.data() + r * width + offset);
    }
    offset += w;
  }
  Shape out_shape = lead;
  out_shape.push_back(width);
  Tensor<T> y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>(y, [parts, widths, y, rows, width]() mutable {
      auto gy = y.grad();
      std::size_t offset = 0;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        const std::size_t w = widths[p];
        if (parts[p].requires_grad()) {
          auto gp = parts[p].grad_mut();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += gy[r * width + offset + j];
          }
        }
        offset += w;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of shape " + shape_str(a.shape()));
  }
  const bool track = tracking<T>({&a});
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = end - begin, full = s[axis];
  std::vector<T> out(outer * len * inner);
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + (o * full + begin) * inner, len * inner, out.data() + o * len * inner);
  }
  Shape out_shape = s;
  out_shape[axis] = len;
  Tensor<T> y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>(y, [a, y, outer, inner, len, full, begin]() mutable {
      auto gy = y.grad();
      auto ga = a.grad_mut();
      for (std::size_t o = 0; o < outer; ++o) {
        T* dst = ga.data() + (o * full + begin) * inner;
        const T* src = gy.data() + o * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  const bool track = tracking<T>({&a});
  const std::size_t m = a.dim(a.rank() - 2), n = a.dim(a.rank() - 1);
  const std::size_t batches = a.size() / (m * n);
  std::vector<T> out(a.size());
  auto av = a.values();
  for (std::size_t s = 0; s < batches; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[s * m * n + j * m + i] = av[s * m * n + i * n + j];
    }
  }
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor<T> y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>(y, [a, y, m, n, batches]() mutable {
      auto gy = y.grad();
      auto ga = a.grad_mut();
      for (std::size_t s = 0; s < batches; ++s) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) ga[s * m * n + i * n + j] += gy[s * m * n + j * m + i];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() == 0) throw DimensionError("softmax of a scalar");
  const bool track = tracking<T>({&a});
  const std::size_t w = a.shape().back();
  const std::size_t rows = a.size() / w;
  auto av = a.values();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * w;
    T* o = out.data() + r * w;
    const T peak = *std::max_element(x, x + w);
    T total = 0;
    for (std::size_t j = 0; j < w; ++j) {
      o[j] = std::exp(x[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < w; ++j) o[j] /= total;
  }
  Tensor<T> y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record<T>(y, [a, y, w, rows]() mutable {
      auto gy = y.grad();
      auto yv = y.values();
      auto ga = a.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < w; ++j) dot += gy[r * w + j] * yv[r * w + j];
        for (std::size_t j = 0; j < w; ++j) ga[r * w + j] += yv[r * w + j] * (gy[r * w + j] - dot);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, double eps) {
  if (a.rank() == 0) throw DimensionError("layer_norm of a scalar");
  const bool track = tracking<T>({&a});
  const std::size_t w = a.shape().back();
  const std::size_t rows = a.size() / w;
  auto av = a.values();
  std::vector<T> out(a.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * w;
    T mu = 0;
    for (std::size_t j = 0; j < w; ++j) mu += x[j];
    mu /= T(w);
    T var = 0;
    for (std::size_t j = 0; j < w; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= T(w);
    inv_std[r] = T(1) / std::sqrt(var + T(eps));
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = (x[j] - mu) * inv_std[r];
  }
  Tensor<T> y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record<T>(y, [a, y, w, rows, inv_std = std::move(inv_std)]() mutable {
      auto gy = y.grad();
      auto yv = y.values();
      auto ga = a.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_g = 0, mean_gy = 0;
        for (std::size_t j = 0; j < w; ++j) {
          mean_g += gy[r * w + j];
          mean_gy += gy[r * w + j] * yv[r * w + j];
        }
        mean_g /= T(w);
        mean_gy /= T(w);
        for (std::size_t j = 0; j < w; ++j) {
          ga[r * w + j] += inv_std[r] * (gy[r * w + j] - mean_g - yv[r * w + j] * mean_gy);
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const bool track = tracking<T>({&a});
  T total = 0;
  for (T v : a.values()) total += v;
  Tensor<T> y = make_output(Shape{}, std::vector<T>{total}, track);
  if (track) {
    record<T>(y, [a, y]() mutable {
      const T g = y.grad()[0];
      for (T& v : a.grad_mut()) v += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  const bool track = tracking<T>({&a});
  T total = 0;
  for (T v : a.values()) total += v;
  const T count = T(a.size());
  Tensor<T> y = make_output(Shape{}, std::vector<T>{total / count}, track);
  if (track) {
    record<T>(y, [a, y, count]() mutable {
      const T g = y.grad()[0] / count;
      for (T& v : a.grad_mut()) v += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  const bool track = tracking<T>({&a});
  auto av = a.values();
  Tensor<T> y = make_output(std::move(shape), std::vector<T>(av.begin(), av.end()), track);
  if (track) {
    record<T>(y, [a, y]() mutable {
      auto gy = y.grad();
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    });
  }
  return y;
}

#define AMORPH_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template Tensor<T> transpose(const Tensor<T>&);                                          \
  template Tensor<T> tanh(const Tensor<T>&);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> softmax(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, double);                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

AMORPH_INSTANTIATE_OPS(float)
AMORPH_INSTANTIATE_OPS(double)

}  // namespace amorph::ops
