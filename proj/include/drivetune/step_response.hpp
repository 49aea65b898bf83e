#pragma once

// Closed-loop step response of the longitudinal PID on the plant alone:
// noise-free speed feedback, constant reference, no scenario.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "drivetune/common.hpp"
#include "drivetune/control.hpp"
#include "drivetune/plant.hpp"

namespace drivetune::control {

struct StepResponse {
  std::vector<double> speed;    // speed after each tick
  std::optional<double> rise_time;  // s from 10% to 90% of the step; empty if never reached
  double overshoot = 0.0;       // m/s above the target, >= 0
  double steady_state_error = 0.0;  // mean |v_ref - v| over the final window
};

inline constexpr std::size_t kStepTicks = 2000;
inline constexpr std::size_t kSteadyWindow = 200;

/// Drives the plant from rest toward `target` for `ticks` ticks. Threshold
/// crossings are the first tick whose post-step speed reaches the level.
inline StepResponse step_response(const GainSet& gains, double target = 10.0,
                                  const plant::PlantParams& params = plant::default_params(),
                                  std::size_t ticks = kStepTicks,
                                  std::size_t steady_window = kSteadyWindow,
                                  std::size_t pid_window = kDefaultWindow) {
  validate(gains);
  plant::validate(params);
  require_finite(target, "target");
  require(target > 0.0, "field 'target' must be > 0");
  require(steady_window > 0 && steady_window <= ticks, "steady window must lie within the run");

  StepResponse out;
  out.speed.reserve(ticks);
  plant::VehicleState state;
  PidState pid;
  pid.capacity = pid_window;
  std::optional<std::size_t> t10;
  std::optional<std::size_t> t90;
  double abs_error_sum = 0.0;
  for (std::size_t k = 0; k < ticks; ++k) {
    auto r = longitudinal_step(gains, pid, target, state.speed);
    pid = std::move(r.pid);
    state = plant::step(state, {r.command.throttle, r.command.brake, 0.0}, params);
    out.speed.push_back(state.speed);
    if (!t10 && state.speed >= 0.1 * target) t10 = k;
    if (!t90 && state.speed >= 0.9 * target) t90 = k;
    out.overshoot = std::max(out.overshoot, state.speed - target);
    if (k >= ticks - steady_window) abs_error_sum += std::abs(target - state.speed);
  }
  if (t10 && t90) out.rise_time = static_cast<double>(*t90 - *t10) * params.dt;
  out.steady_state_error = abs_error_sum / static_cast<double>(steady_window);
  return out;
}

}  // namespace drivetune::control
