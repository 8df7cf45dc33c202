#include "amorph/tensor.hpp"

#include <atomic>
#include <stdexcept>

#include "amorph/errors.hpp"

namespace amorph {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
std::atomic<std::uint64_t> next_tensor_id{1};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  s_->shape = std::move(shape);
  s_->value = std::move(values);
  s_->requires_grad = requires_grad;
  s_->id = next_tensor_id.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return s_->value[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() const {
  if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  s_->grad.assign(s_->value.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(s_->shape, s_->value, false);
}

template <typename T>
void Tape<T>::record(Tensor<T> output, std::function<void()> adjoint) {
  entries_.push_back({std::move(output), std::move(adjoint)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || !loss.shape().empty()) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (entries_.empty()) throw std::invalid_argument("backward on an empty tape");
  for (auto& e : entries_) e.output.zero_grad();
  Tensor<T> seed = loss;
  seed.grad_mut()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->adjoint();
  }
}

namespace {
template <typename T>
Tape<T>*& tape_slot() noexcept {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}
}  // namespace

template <typename T>
Tape<T>* active_tape() noexcept {
  return tape_slot<T>();
}

template <typename T>
Recording<T>::Recording(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
Recording<T>::~Recording() {
  tape_slot<T>() = previous_;
}

template <typename T>
NoGrad<T>::NoGrad() : previous_(tape_slot<T>()) {
  tape_slot<T>() = nullptr;
}

template <typename T>
NoGrad<T>::~NoGrad() {
  tape_slot<T>() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class Recording<float>;
template class Recording<double>;
template class NoGrad<float>;
template class NoGrad<double>;
template Tape<float>* active_tape<float>() noexcept;
template Tape<double>* active_tape<double>() noexcept;

}  // namespace amorph
