#pragma once

// Intersection with a crossing pedestrian. The vehicle drives along +x on
// the line y = 0 under an external longitudinal controller; the adversary
// picks pedestrian accelerations.

#include <array>
#include <memory>

#include <json.hpp>

#include "svt/env.hpp"

namespace svt::env {

struct IdmParams {
  double desired_speed = 11.0;  // v0, m/s
  double max_accel = 2.0;       // a_max, m/s^2
  double comfort_decel = 3.0;   // b, m/s^2
  double min_gap = 2.0;         // s0, m
  double time_headway = 1.5;    // T, s
  double exponent = 4.0;        // delta

  friend bool operator==(const IdmParams&, const IdmParams&) = default;
};

struct DrivingConfig {
  double vehicle_x_min = -50.0;
  double vehicle_x_max = -40.0;
  double vehicle_speed_min = 9.0;
  double vehicle_speed_max = 11.0;
  double road_end = 25.0;
  double ped_x_min = -1.0;
  double ped_x_max = 1.0;
  double ped_y_min = -6.0;
  double ped_y_max = -4.0;
  double ped_vy_min = 1.0;
  double ped_vy_max = 1.5;
  IdmParams idm;
  double blind_spot_direction_deg = 20.0;
  double blind_spot_width_deg = 30.0;
  double dt = 0.1;
  int max_steps = 300;
  double lambda = 0.01;
  double vehicle_length = 4.0;
  double vehicle_width = 2.0;
  double ped_size = 0.5;
  double corridor_half_width = 2.0;
  double ped_speed_cap = 3.0;
  double ped_accel = 1.0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const DrivingConfig&, const DrivingConfig&) = default;
};

nlohmann::json to_json(const DrivingConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
DrivingConfig driving_from_json(const nlohmann::json& j, DrivingConfig base = {});

struct DrivingState {
  double veh_x = 0.0;
  double veh_speed = 0.0;
  double ped_x = 0.0;
  double ped_y = 0.0;
  double ped_vx = 0.0;
  double ped_vy = 0.0;
  int steps = 0;
  bool done = false;
};

/// Pedestrian accelerations: up (+y), down, left (-x), right, none.
enum PedDisturbance : int { kPedUp, kPedDown, kPedLeft, kPedRight, kPedNone };
inline constexpr int kNumPedDisturbances = 5;

/// Natural probability of each disturbance.
inline constexpr std::array<double, kNumPedDisturbances> kPedDisturbanceProb = {0.01, 0.01, 0.01,
                                                                                0.01, 0.96};

/// Longitudinal controller of the vehicle under test.
class VehiclePolicy {
 public:
  virtual ~VehiclePolicy() = default;
  virtual double acceleration(const DrivingState& state) const = 0;
};

/// Axis-aligned footprint overlap of vehicle and pedestrian.
bool footprints_overlap(const DrivingState& s, const DrivingConfig& cfg);

/// lambda * ln p(x) + 1{failure}.
double driving_reward(int disturbance, bool failure, const DrivingConfig& cfg);

struct DriveStep {
  DrivingState next;
  double reward = 0.0;
  bool done = false;
  bool is_failure = false;
  bool truncated = false;
};

/// Semi-implicit Euler step. Throws InvalidDisturbance outside 0..4.
DriveStep drive_step(const DrivingState& state, int disturbance, const VehiclePolicy& vehicle,
                     const DrivingConfig& cfg);

/// [veh_x/50, veh_speed/15, ped_x/10, ped_y/10, ped_vx/3, ped_vy/3].
Vec drive_encode(const DrivingState& state, const DrivingConfig& cfg);

DrivingState drive_reset(const DrivingConfig& cfg, Rng& rng);

class DrivingAdversaryEnv : public Environment {
 public:
  DrivingAdversaryEnv(DrivingConfig cfg, std::shared_ptr<const VehiclePolicy> vehicle);

  int state_dim() const override { return 6; }
  int num_disturbances() const override { return kNumPedDisturbances; }
  Vec reset(Rng& rng) override;
  StepResult step(int disturbance, Rng& rng) override;

  const DrivingState& state() const { return state_; }
  void set_state(const DrivingState& s) { state_ = s; }
  const DrivingConfig& config() const { return cfg_; }

 private:
  DrivingConfig cfg_;
  std::shared_ptr<const VehiclePolicy> vehicle_;
  DrivingState state_;
};

}  // namespace svt::env
