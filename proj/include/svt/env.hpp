#pragma once

#include <functional>
#include <memory>

#include "svt/nn.hpp"
#include "svt/random.hpp"

namespace svt::env {

using nn::Vec;

/// Outcome of one environment transition.
struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool done = false;
  bool is_failure = false;
  /// Episode ended only because of the step cap; the last state is not
  /// terminal for bootstrapping purposes.
  bool truncated = false;
};

/// A safety-validation MDP seen from the adversary: states are encoded
/// vectors of length state_dim(), actions are disturbance indices.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int state_dim() const = 0;
  virtual int num_disturbances() const = 0;
  virtual double discount() const { return 0.95; }
  virtual Vec reset(Rng& rng) = 0;
  virtual StepResult step(int disturbance, Rng& rng) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

}  // namespace svt::env
