#pragma once

// Systems under test: dynamic-programming and DQN-trained gridworld
// policies, and the IDM vehicle controller with an angular blind spot.

#include <memory>
#include <vector>

#include <json.hpp>

#include "svt/driving.hpp"
#include "svt/gridworld.hpp"
#include "svt/nn.hpp"

namespace svt::dqn {
struct DqnConfig;
}

namespace svt::sut {

using env::Cell;
using env::DrivingConfig;
using env::DrivingState;
using env::GridworldConfig;
using env::GridworldState;

/// Dense action/value tables keyed by joint index blue * orange_slots + orange,
/// with cells indexed y * width + x. orange_slots is 1 when the policy was
/// solved without an adversary.
class TabularPolicy : public env::GridSystemPolicy {
 public:
  TabularPolicy(int width, int height, int orange_slots, std::vector<int> actions,
                std::vector<double> values);

  int act(const GridworldState& state, const GridworldConfig& cfg) const override;
  int action(int joint) const { return actions_[joint]; }
  double value(int joint) const { return values_[joint]; }
  int joint_index(Cell blue, Cell orange) const;
  int num_entries() const { return static_cast<int>(actions_.size()); }
  int width() const { return width_; }
  int height() const { return height_; }
  int orange_slots() const { return orange_slots_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.orange_slots_ == b.orange_slots_ &&
           a.actions_ == b.actions_ && a.values_ == b.values_;
  }

 private:
  int width_;
  int height_;
  int orange_slots_;
  std::vector<int> actions_;
  std::vector<double> values_;
};

nlohmann::json to_json(const TabularPolicy& policy);
TabularPolicy tabular_policy_from_json(const nlohmann::json& j);

struct ValueIterationOptions {
  double gamma = 0.95;
  double tolerance = 1e-8;
  long max_iterations = 100000;
};

/// Optimal policy of the blue agent against a uniformly random adversary (or
/// none), with the slip model of the environment. Greedy ties go to the
/// lowest action index. Throws ConvergenceError past max_iterations.
TabularPolicy value_iteration(const GridworldConfig& cfg, const env::SystemRewardSpec& reward,
                              const ValueIterationOptions& options = {});

/// One synchronous Bellman backup of the values stored in policy; returns the
/// backed-up values (used to check the fixed point).
std::vector<double> bellman_backup(const GridworldConfig& cfg, const env::SystemRewardSpec& reward,
                                   const std::vector<double>& values, double gamma,
                                   std::vector<int>* greedy = nullptr);

/// Greedy policy of a trained blue-agent Q-network.
class MlpGridPolicy : public env::GridSystemPolicy {
 public:
  explicit MlpGridPolicy(nn::Mlp net);
  int act(const GridworldState& state, const GridworldConfig& cfg) const override;
  const nn::Mlp& network() const { return net_; }

 private:
  nn::Mlp net_;
};

/// Free-road IDM acceleration.
double idm_free_road(const env::IdmParams& p, double speed);
/// IDM acceleration behind a leader at bumper gap > 0 with approach rate dv.
double idm_with_leader(const env::IdmParams& p, double speed, double gap, double dv);

class IdmController : public env::VehiclePolicy {
 public:
  explicit IdmController(const DrivingConfig& cfg);
  IdmController(const DrivingConfig& cfg, double blind_spot_direction_deg,
                double blind_spot_width_deg);

  /// Bearing of the pedestrian from the vehicle in degrees, heading = +x.
  double bearing_deg(const DrivingState& s) const;
  /// False iff the wrapped angle between bearing and blind-spot direction is
  /// strictly less than half the blind-spot width.
  bool is_visible(const DrivingState& s) const;
  /// IDM with the pedestrian as a stationary leader when it is visible, in
  /// the corridor and ahead; clamped to [-2b, a_max].
  double acceleration(const DrivingState& s) const override;

  double blind_spot_direction() const { return direction_; }
  double blind_spot_width() const { return width_; }

 private:
  DrivingConfig cfg_;
  double direction_;
  double width_;
};

/// Trains the blue agent with DQN against a uniformly random adversary and
/// returns n_checkpoints snapshots taken every training_steps / n_checkpoints
/// steps.
std::vector<nn::Mlp> train_system_checkpoints(const GridworldConfig& cfg,
                                              const dqn::DqnConfig& dqn_cfg, int n_checkpoints,
                                              const env::SystemRewardSpec& reward = {});

/// Steps at which train_system_checkpoints snapshots.
std::vector<long> checkpoint_steps(long training_steps, int n_checkpoints);

}  // namespace svt::sut
