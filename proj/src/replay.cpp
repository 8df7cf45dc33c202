#include "amorph/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "amorph/errors.hpp"

namespace amorph {

namespace {

void check_transition(const Transition& t, std::size_t nodes) {
  if (t.obs.nodes != nodes || t.next_obs.nodes != nodes || t.actions.size() != nodes) {
    throw DimensionError("transition for task " + std::to_string(t.task) + " does not have " + std::to_string(nodes) +
                         " nodes");
  }
  if (!std::isfinite(t.reward)) throw NumericError("transition reward is not finite");
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t task, std::size_t nodes, std::size_t capacity)
    : task_(task), nodes_(nodes), capacity_(capacity) {
  if (capacity == 0 || nodes == 0) throw std::invalid_argument("replay buffer needs positive capacity and nodes");
  const std::size_t row = nodes * kObsWidth;
  obs_.resize(capacity * row);
  next_obs_.resize(capacity * row);
  actions_.resize(capacity * nodes);
  rewards_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.task != task_) {
    throw std::invalid_argument("transition of task " + std::to_string(t.task) + " pushed into buffer of task " +
                                std::to_string(task_));
  }
  check_transition(t, nodes_);
  const std::size_t row = nodes_ * kObsWidth;
  std::copy(t.obs.data.begin(), t.obs.data.end(), obs_.begin() + static_cast<std::ptrdiff_t>(head_ * row));
  std::copy(t.next_obs.data.begin(), t.next_obs.data.end(), next_obs_.begin() + static_cast<std::ptrdiff_t>(head_ * row));
  std::copy(t.actions.begin(), t.actions.end(), actions_.begin() + static_cast<std::ptrdiff_t>(head_ * nodes_));
  rewards_[head_] = static_cast<float>(t.reward);
  done_[head_] = t.done ? 1.0f : 0.0f;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++pushed_;
}

std::size_t ReplayBuffer::slot_of(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay index " + std::to_string(i) + " beyond size " + std::to_string(size_));
  return (head_ + capacity_ - size_ + i) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  const std::size_t slot = slot_of(i);
  const std::size_t row = nodes_ * kObsWidth;
  Transition t;
  t.task = task_;
  t.obs = {nodes_, std::vector<double>(obs_.begin() + slot * row, obs_.begin() + (slot + 1) * row)};
  t.next_obs = {nodes_, std::vector<double>(next_obs_.begin() + slot * row, next_obs_.begin() + (slot + 1) * row)};
  t.actions.assign(actions_.begin() + slot * nodes_, actions_.begin() + (slot + 1) * nodes_);
  t.reward = rewards_[slot];
  t.done = done_[slot] != 0.0f;
  return t;
}

void ReplayBuffer::copy_into(std::size_t slot, Batch& b, std::size_t r) const {
  const std::size_t row = nodes_ * kObsWidth;
  std::copy_n(obs_.begin() + slot * row, row, b.obs.begin() + r * row);
  std::copy_n(next_obs_.begin() + slot * row, row, b.next_obs.begin() + r * row);
  std::copy_n(actions_.begin() + slot * nodes_, nodes_, b.actions.begin() + r * nodes_);
  b.rewards[r] = rewards_[slot];
  b.done[r] = done_[slot];
}

Batch ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  Batch b;
  b.task = task_;
  b.nodes = nodes_;
  b.size = batch_size;
  b.obs.resize(batch_size * nodes_ * kObsWidth);
  b.next_obs.resize(b.obs.size());
  b.actions.resize(batch_size * nodes_);
  b.rewards.resize(batch_size);
  b.done.resize(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  for (std::size_t r = 0; r < batch_size; ++r) copy_into(slot_of(pick(rng)), b, r);
  return b;
}

Batch make_batch(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw std::invalid_argument("empty batch");
  const std::size_t task = transitions.front().task;
  const std::size_t nodes = transitions.front().obs.nodes;
  Batch b;
  b.task = task;
  b.nodes = nodes;
  b.size = transitions.size();
  for (const Transition& t : transitions) {
    if (t.task != task) {
      throw std::invalid_argument("mixed-task batch: tasks " + std::to_string(task) + " and " + std::to_string(t.task));
    }
    check_transition(t, nodes);
    b.obs.insert(b.obs.end(), t.obs.data.begin(), t.obs.data.end());
    b.next_obs.insert(b.next_obs.end(), t.next_obs.data.begin(), t.next_obs.data.end());
    b.actions.insert(b.actions.end(), t.actions.begin(), t.actions.end());
    b.rewards.push_back(static_cast<float>(t.reward));
    b.done.push_back(t.done ? 1.0f : 0.0f);
  }
  return b;
}

}  // namespace amorph
