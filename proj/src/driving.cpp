#include "svt/driving.hpp"

#include <algorithm>
#include <cmath>

#include "svt/errors.hpp"

namespace svt::env {

void DrivingConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InvalidConfig(std::string(name) + " must be positive");
  };
  positive(idm.desired_speed, "idm.desired_speed");
  positive(idm.max_accel, "idm.max_accel");
  positive(idm.comfort_decel, "idm.comfort_decel");
  positive(idm.min_gap, "idm.min_gap");
  positive(idm.time_headway, "idm.time_headway");
  positive(idm.exponent, "idm.exponent");
  positive(dt, "dt");
  positive(lambda, "lambda");
  positive(vehicle_length, "vehicle_length");
  positive(vehicle_width, "vehicle_width");
  positive(ped_size, "ped_size");
  positive(corridor_half_width, "corridor_half_width");
  positive(ped_speed_cap, "ped_speed_cap");
  positive(ped_accel, "ped_accel");
  if (blind_spot_width_deg < 0.0) throw InvalidConfig("blind_spot_width_deg must be >= 0");
  if (max_steps < 1) throw InvalidConfig("max_steps must be positive");
  if (vehicle_x_min > vehicle_x_max || ped_x_min > ped_x_max || ped_y_min > ped_y_max ||
      vehicle_speed_min > vehicle_speed_max || ped_vy_min > ped_vy_max) {
    throw InvalidConfig("initial-condition ranges must have min <= max");
  }
  if (vehicle_speed_min < 0.0) throw InvalidConfig("vehicle speeds must be non-negative");
  if (std::abs(ped_vy_min) > ped_speed_cap || std::abs(ped_vy_max) > ped_speed_cap) {
    throw InvalidConfig("initial pedestrian speed exceeds the cap");
  }
}

#define SVT_DRIVING_FIELDS(X)                                                                    \
  X(vehicle_x_min) X(vehicle_x_max) X(vehicle_speed_min) X(vehicle_speed_max) X(road_end)       \
  X(ped_x_min) X(ped_x_max) X(ped_y_min) X(ped_y_max) X(ped_vy_min) X(ped_vy_max)              \
  X(blind_spot_direction_deg) X(blind_spot_width_deg) X(dt) X(max_steps) X(lambda)             \
  X(vehicle_length) X(vehicle_width) X(ped_size) X(corridor_half_width) X(ped_speed_cap)       \
  X(ped_accel) X(seed)

#define SVT_IDM_FIELDS(X) \
  X(desired_speed) X(max_accel) X(comfort_decel) X(min_gap) X(time_headway) X(exponent)

nlohmann::json to_json(const DrivingConfig& cfg) {
  nlohmann::json j;
#define X(f) j[#f] = cfg.f;
  SVT_DRIVING_FIELDS(X)
#undef X
  nlohmann::json idm;
#define X(f) idm[#f] = cfg.idm.f;
  SVT_IDM_FIELDS(X)
#undef X
  j["idm"] = idm;
  return j;
}

DrivingConfig driving_from_json(const nlohmann::json& j, DrivingConfig cfg) {
  for (const auto& [key, value] : j.items()) {
    bool known = key == "idm";
#define X(f) known = known || key == #f;
    SVT_DRIVING_FIELDS(X)
#undef X
    if (!known) throw InvalidConfig("driving: unknown key '" + key + "'");
  }
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(cfg.f);
  SVT_DRIVING_FIELDS(X)
#undef X
  if (j.contains("idm")) {
    const auto& idm = j.at("idm");
    for (const auto& [key, value] : idm.items()) {
      bool known = false;
#define X(f) known = known || key == #f;
      SVT_IDM_FIELDS(X)
#undef X
      if (!known) throw InvalidConfig("driving.idm: unknown key '" + key + "'");
    }
#define X(f) \
  if (idm.contains(#f)) idm.at(#f).get_to(cfg.idm.f);
    SVT_IDM_FIELDS(X)
#undef X
  }
  cfg.validate();
  return cfg;
}

#undef SVT_DRIVING_FIELDS
#undef SVT_IDM_FIELDS

bool footprints_overlap(const DrivingState& s, const DrivingConfig& cfg) {
  const double dx = std::abs(s.ped_x - s.veh_x);
  const double dy = std::abs(s.ped_y);
  return dx < 0.5 * (cfg.vehicle_length + cfg.ped_size) &&
         dy < 0.5 * (cfg.vehicle_width + cfg.ped_size);
}

double driving_reward(int disturbance, bool failure, const DrivingConfig& cfg) {
  return cfg.lambda * std::log(kPedDisturbanceProb[disturbance]) + (failure ? 1.0 : 0.0);
}

DriveStep drive_step(const DrivingState& state, int disturbance, const VehiclePolicy& vehicle,
                     const DrivingConfig& cfg) {
  if (disturbance < 0 || disturbance >= kNumPedDisturbances) {
    throw InvalidDisturbance("pedestrian disturbance " + std::to_string(disturbance) +
                             " outside 0..4");
  }
  double ax = 0.0;
  double ay = 0.0;
  switch (disturbance) {
    case kPedUp: ay = cfg.ped_accel; break;
    case kPedDown: ay = -cfg.ped_accel; break;
    case kPedLeft: ax = -cfg.ped_accel; break;
    case kPedRight: ax = cfg.ped_accel; break;
    default: break;
  }
  const double veh_accel = vehicle.acceleration(state);

  DriveStep out;
  DrivingState& n = out.next;
  n = state;
  n.ped_vx = std::clamp(state.ped_vx + ax * cfg.dt, -cfg.ped_speed_cap, cfg.ped_speed_cap);
  n.ped_vy = std::clamp(state.ped_vy + ay * cfg.dt, -cfg.ped_speed_cap, cfg.ped_speed_cap);
  n.veh_speed = std::max(0.0, state.veh_speed + veh_accel * cfg.dt);
  n.ped_x = state.ped_x + n.ped_vx * cfg.dt;
  n.ped_y = state.ped_y + n.ped_vy * cfg.dt;
  n.veh_x = state.veh_x + n.veh_speed * cfg.dt;
  n.steps = state.steps + 1;

  out.is_failure = footprints_overlap(n, cfg);
  if (out.is_failure || n.veh_x >= cfg.road_end) {
    out.done = true;
  } else if (n.steps >= cfg.max_steps) {
    out.done = true;
    out.truncated = true;
  }
  n.done = out.done;
  out.reward = driving_reward(disturbance, out.is_failure, cfg);
  return out;
}

Vec drive_encode(const DrivingState& s, const DrivingConfig& cfg) {
  Vec v(6);
  v << s.veh_x / 50.0, s.veh_speed / 15.0, s.ped_x / 10.0, s.ped_y / 10.0,
      s.ped_vx / cfg.ped_speed_cap, s.ped_vy / cfg.ped_speed_cap;
  return v;
}

DrivingState drive_reset(const DrivingConfig& cfg, Rng& rng) {
  DrivingState s;
  s.veh_x = uniform(rng, cfg.vehicle_x_min, cfg.vehicle_x_max);
  s.veh_speed = uniform(rng, cfg.vehicle_speed_min, cfg.vehicle_speed_max);
  s.ped_x = uniform(rng, cfg.ped_x_min, cfg.ped_x_max);
  s.ped_y = uniform(rng, cfg.ped_y_min, cfg.ped_y_max);
  s.ped_vx = 0.0;
  s.ped_vy = uniform(rng, cfg.ped_vy_min, cfg.ped_vy_max);
  return s;
}

DrivingAdversaryEnv::DrivingAdversaryEnv(DrivingConfig cfg,
                                         std::shared_ptr<const VehiclePolicy> vehicle)
    : cfg_(std::move(cfg)), vehicle_(std::move(vehicle)) {
  cfg_.validate();
  if (!vehicle_) throw InvalidConfig("driving environment needs a vehicle policy");
}

Vec DrivingAdversaryEnv::reset(Rng& rng) {
  state_ = drive_reset(cfg_, rng);
  return drive_encode(state_, cfg_);
}

StepResult DrivingAdversaryEnv::step(int disturbance, Rng& /*rng*/) {
  const DriveStep s = drive_step(state_, disturbance, *vehicle_, cfg_);
  state_ = s.next;
  return {drive_encode(state_, cfg_), s.reward, s.done, s.is_failure, s.truncated};
}

}  // namespace svt::env
