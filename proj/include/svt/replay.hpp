#pragma once

// Proportional prioritized experience replay over a sum tree.

#include <cstddef>
#include <vector>

#include "svt/nn.hpp"
#include "svt/random.hpp"

namespace svt::replay {

using nn::Vec;

struct Transition {
  Vec state;
  int disturbance = 0;
  double reward = 0.0;
  Vec next_state;
  bool terminal = false;
};

/// Binary tree of partial sums over a fixed number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t leaf, double value);
  double get(std::size_t leaf) const { return nodes_[base_ + leaf]; }
  double total() const { return nodes_[1]; }
  /// Leaf whose cumulative interval contains mass in [0, total()).
  std::size_t find(double mass) const;
  std::size_t capacity() const { return capacity_; }
  /// Largest |parent - (left + right)| over internal nodes.
  double max_inconsistency() const;

 private:
  std::size_t capacity_;
  std::size_t base_;
  std::vector<double> nodes_;
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;
  double beta_start = 0.4;
  double beta_end = 1.0;
  double priority_floor = 1e-3;
  bool importance_sampling = true;
};

struct Batch {
  std::vector<const Transition*> transitions;
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {});

  /// Stores t at the running maximum priority (1.0 while none has been set),
  /// evicting the oldest entry when full.
  void push(Transition t);
  /// Draws batch_size slots independently with probability proportional to
  /// their priority. Importance weights (N P(i))^-beta are divided by the
  /// batch maximum. Throws NotEnoughSamples when size() < batch_size.
  Batch sample(std::size_t batch_size, Rng& rng) const;
  /// priority_i = (|td_i| + floor)^alpha. Throws std::out_of_range for
  /// slots that are not occupied.
  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<double>& td_errors);

  /// Current importance exponent; the trainer anneals it.
  void set_beta(double beta) { beta_ = beta; }
  double beta() const { return beta_; }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cfg_.capacity; }
  double priority(std::size_t index) const { return tree_.get(index); }
  double max_priority() const { return max_priority_; }
  /// Probability that a single draw returns slot index.
  double probability(std::size_t index) const { return tree_.get(index) / tree_.total(); }
  const Transition& at(std::size_t index) const { return storage_.at(index); }
  const SumTree& tree() const { return tree_; }
  const ReplayConfig& config() const { return cfg_; }

 private:
  ReplayConfig cfg_;
  SumTree tree_;
  std::vector<Transition> storage_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  double max_priority_ = 1.0;
  double beta_;
};

}  // namespace svt::replay
