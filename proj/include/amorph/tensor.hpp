#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace amorph {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an optional gradient accumulator.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for a
/// deep copy. Values and grad always have identical shape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value);
  static Tensor scalar(T value);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t size() const { return s_->value.size(); }
  std::uint64_t id() const { return s_->id; }

  std::span<const T> values() const { return s_->value; }
  // Handle semantics: mutation through a const handle is allowed.
  std::span<T> values_mut() const { return s_->value; }
  T operator[](std::size_t i) const { return s_->value[i]; }
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }
  bool has_grad() const { return !s_->grad.empty(); }
  /// Empty span until a gradient has been accumulated or zeroed.
  std::span<const T> grad() const { return s_->grad; }
  /// Allocates a zero gradient on first use.
  std::span<T> grad_mut() const;
  void zero_grad() const;

  /// Deep copy of values; the copy does not track gradients.
  Tensor clone() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
  };
  std::shared_ptr<Storage> s_;
};

/// Ordered record of primitive applications. Entries are appended in
/// execution order, so every entry's inputs precede it.
template <typename T>
class Tape {
 public:
  struct Entry {
    Tensor<T> output;
    std::function<void()> adjoint;
  };

  void record(Tensor<T> output, std::function<void()> adjoint);
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Reverse sweep from a scalar loss. Intermediate gradients are reset at the
  /// start of each sweep; leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<Entry> entries_;
};

/// Tape that primitives record onto in the current thread, or nullptr.
template <typename T>
Tape<T>* active_tape() noexcept;

/// Makes `tape` the active tape of this thread for the guard's lifetime.
template <typename T>
class Recording {
 public:
  explicit Recording(Tape<T>& tape);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape<T>* previous_;
};

/// Disables recording for the guard's lifetime.
template <typename T>
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Recording<float>;
extern template class Recording<double>;
extern template class NoGrad<float>;
extern template class NoGrad<double>;

}  // namespace amorph
