#include "svt/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "svt/errors.hpp"

namespace svt::replay {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), base_(1) {
  if (capacity == 0) throw InvalidConfig("sum tree capacity must be positive");
  while (base_ < capacity) base_ <<= 1;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t leaf, double value) {
  if (leaf >= capacity_) throw std::out_of_range("sum tree leaf " + std::to_string(leaf));
  std::size_t i = base_ + leaf;
  nodes_[i] = value;
  for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t i = 1;
  while (i < base_) {
    const double left = nodes_[2 * i];
    if (mass < left || nodes_[2 * i + 1] <= 0.0) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  // Rounding can walk into an empty leaf at the right edge; step back to the
  // last leaf with mass.
  std::size_t leaf = i - base_;
  while (leaf > 0 && (leaf >= capacity_ || nodes_[base_ + leaf] <= 0.0)) --leaf;
  return leaf;
}

double SumTree::max_inconsistency() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < base_; ++i) {
    worst = std::max(worst, std::abs(nodes_[i] - (nodes_[2 * i] + nodes_[2 * i + 1])));
  }
  return worst;
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg)
    : cfg_(cfg), tree_(cfg.capacity), beta_(cfg.beta_start) {
  if (cfg_.alpha < 0.0) throw InvalidConfig("priority exponent must be non-negative");
  if (!(cfg_.priority_floor > 0.0)) throw InvalidConfig("priority floor must be positive");
  storage_.reserve(std::min<std::size_t>(cfg_.capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (storage_.size() < cfg_.capacity) {
    storage_.push_back(std::move(t));
  } else {
    storage_[next_] = std::move(t);
  }
  tree_.set(next_, max_priority_);
  next_ = (next_ + 1) % cfg_.capacity;
  size_ = std::min(size_ + 1, cfg_.capacity);
}

Batch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (size_ < batch_size || size_ == 0) {
    throw NotEnoughSamples("replay holds " + std::to_string(size_) + " transitions, batch needs " +
                           std::to_string(batch_size));
  }
  Batch batch;
  batch.transitions.reserve(batch_size);
  batch.indices.reserve(batch_size);
  batch.weights.reserve(batch_size);
  const double total = tree_.total();
  double max_w = 0.0;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t idx = tree_.find(uniform01(rng) * total);
    batch.indices.push_back(idx);
    batch.transitions.push_back(&storage_[idx]);
    double w = 1.0;
    if (cfg_.importance_sampling) {
      const double p = tree_.get(idx) / total;
      w = std::pow(static_cast<double>(size_) * p, -beta_);
    }
    batch.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  for (double& w : batch.weights) w /= max_w;
  return batch;
}

void ReplayBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                     const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size()) {
    throw ShapeError("update_priorities: index and error counts differ");
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) {
      throw std::out_of_range("replay slot " + std::to_string(indices[k]) + " is not occupied");
    }
    const double p = std::pow(std::abs(td_errors[k]) + cfg_.priority_floor, cfg_.alpha);
    tree_.set(indices[k], p);
    max_priority_ = std::max(max_priority_, p);
  }
}

}  // namespace svt::replay
