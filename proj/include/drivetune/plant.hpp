#pragma once

// Point-mass longitudinal vehicle with a kinematic lateral offset/heading pair,
// expressed in the route (Frenet) frame.

#include <cmath>

#include "drivetune/common.hpp"

namespace drivetune::plant {

struct VehicleState {
  double time = 0.0;            // s
  double arc_position = 0.0;    // m along the route centerline
  double lateral_offset = 0.0;  // m, left positive
  double speed = 0.0;           // m/s, >= 0
  double heading_error = 0.0;   // rad, relative to the route tangent
  double last_throttle = 0.0;
  double last_brake = 0.0;
  double last_steer = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct PlantParams {
  double dt = 0.05;               // s per tick
  double accel_gain = 4.0;        // m/s^2 per unit throttle
  double brake_gain = 8.0;        // m/s^2 per unit brake
  double drag_coeff = 0.0015;     // 1/m
  double rolling_resist = 0.1;    // m/s^2
  double top_speed = 30.0;        // m/s
  double steer_gain = 0.8;        // rad/s per unit steer
  double lane_half_width = 1.75;  // m

  friend bool operator==(const PlantParams&, const PlantParams&) = default;
};

/// The frozen reference plant (20 Hz tick).
inline PlantParams default_params() { return PlantParams{}; }

inline void validate(const PlantParams& p) {
  require_finite(p.dt, "dt");
  require_finite(p.accel_gain, "accel_gain");
  require_finite(p.brake_gain, "brake_gain");
  require_finite(p.drag_coeff, "drag_coeff");
  require_finite(p.rolling_resist, "rolling_resist");
  require_finite(p.top_speed, "top_speed");
  require_finite(p.steer_gain, "steer_gain");
  require_finite(p.lane_half_width, "lane_half_width");
  require(p.dt > 0.0, "field 'dt' must be > 0");
  require(p.accel_gain > 0.0, "field 'accel_gain' must be > 0");
  require(p.brake_gain > 0.0, "field 'brake_gain' must be > 0");
  require(p.top_speed > 0.0, "field 'top_speed' must be > 0");
  require(p.drag_coeff >= 0.0, "field 'drag_coeff' must be >= 0");
  require(p.rolling_resist >= 0.0, "field 'rolling_resist' must be >= 0");
  require(p.lane_half_width > 0.0, "field 'lane_half_width' must be > 0");
}

inline void validate(const VehicleState& s) {
  require_finite(s.time, "time");
  require_finite(s.arc_position, "arc_position");
  require_finite(s.lateral_offset, "lateral_offset");
  require_finite(s.speed, "speed");
  require_finite(s.heading_error, "heading_error");
  require(s.speed >= 0.0, "field 'speed' must be >= 0");
}

/// Advances the vehicle by one tick. Pure: identical inputs give bit-identical
/// outputs.
inline VehicleState step(const VehicleState& state, const ControlAction& action,
                         const PlantParams& params) {
  validate(state);
  validate(action);
  validate(params);

  const double v = state.speed;
  const double accel = params.accel_gain * action.throttle * (1.0 - v / params.top_speed) -
                       params.brake_gain * action.brake - params.drag_coeff * v * v -
                       params.rolling_resist;

  VehicleState next = state;
  next.time = state.time + params.dt;
  next.speed = std::max(0.0, v + params.dt * accel);
  next.arc_position = state.arc_position + params.dt * next.speed * std::cos(state.heading_error);
  next.lateral_offset =
      state.lateral_offset + params.dt * next.speed * std::sin(state.heading_error);
  next.heading_error = state.heading_error + params.dt * params.steer_gain * action.steer;
  next.last_throttle = action.throttle;
  next.last_brake = action.brake;
  next.last_steer = action.steer;
  return next;
}

}  // namespace drivetune::plant
