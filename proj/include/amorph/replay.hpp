#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "amorph/env.hpp"

namespace amorph {

struct Transition {
  NodeFeatureMatrix obs;
  std::vector<double> actions;  // one per node, root entry included
  double reward = 0.0;
  NodeFeatureMatrix next_obs;
  bool done = false;  // terminal; time-limit truncation is stored as not done
  std::size_t task = 0;
};

/// Training batch from a single task, stored flat in float32.
/// Row b * nodes + i of obs / next_obs belongs to node i of transition b.
struct Batch {
  std::size_t task = 0;
  std::size_t nodes = 0;
  std::size_t size = 0;
  std::vector<float> obs;       // size * nodes * kObsWidth
  std::vector<float> actions;   // size * nodes
  std::vector<float> rewards;   // size
  std::vector<float> next_obs;  // size * nodes * kObsWidth
  std::vector<float> done;      // size, 1 for terminal
};

/// Packs transitions into a batch. Throws std::invalid_argument when they come
/// from more than one task or disagree on node count.
Batch make_batch(const std::vector<Transition>& transitions);

/// Fixed-capacity FIFO ring buffer for one task.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t task, std::size_t nodes, std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t nodes() const noexcept { return nodes_; }
  std::size_t task() const noexcept { return task_; }
  /// Total pushes, including overwritten ones.
  std::uint64_t pushed() const noexcept { return pushed_; }

  /// i-th oldest stored transition.
  Transition at(std::size_t i) const;

  /// Uniform sample with replacement from the filled region.
  Batch sample(std::size_t batch_size, std::mt19937_64& rng) const;

 private:
  std::size_t slot_of(std::size_t i) const;
  void copy_into(std::size_t slot, Batch& batch, std::size_t row) const;

  std::size_t task_, nodes_, capacity_;
  std::size_t size_ = 0, head_ = 0;
  std::uint64_t pushed_ = 0;
  std::vector<float> obs_, actions_, rewards_, next_obs_, done_;
};

}  // namespace amorph
