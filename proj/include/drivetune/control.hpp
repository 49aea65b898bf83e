#pragma once

#include <cstddef>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drivetune/common.hpp"

namespace drivetune::control {

/// The five tunable longitudinal parameters.
struct GainSet {
  double kp = 5.0;
  double ki = 0.5;
  double kd = 1.0;
  double max_throttle = 0.75;  // (0, 1]
  double brake_speed = 0.4;    // (0, 1): brake when v_ref < brake_speed * v

  friend bool operator==(const GainSet&, const GainSet&) = default;
  friend auto operator<=>(const GainSet&, const GainSet&) = default;
};

inline GainSet tcp_original() { return {5.0, 0.5, 1.0, 0.75, 0.4}; }
inline GainSet tcp_tuned() { return {11.0, 0.1, 1.0, 0.8, 0.45}; }

struct Preset {
  std::string_view name;
  GainSet gains;
};

inline std::vector<Preset> presets() {
  return {{"tcp-original", tcp_original()}, {"tcp-tuned", tcp_tuned()}};
}

inline std::optional<GainSet> find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p.gains;
  }
  return std::nullopt;
}

/// Field-level validation messages; empty when the gain set is admissible.
inline std::vector<std::pair<std::string, std::string>> gain_errors(const GainSet& g) {
  std::vector<std::pair<std::string, std::string>> errors;
  auto check = [&](double v, const char* name, bool ok, const char* rule) {
    if (!std::isfinite(v)) {
      errors.emplace_back(name, "must be finite");
    } else if (!ok) {
      errors.emplace_back(name, rule);
    }
  };
  check(g.kp, "kp", g.kp >= 0.0, "must be >= 0");
  check(g.ki, "ki", g.ki >= 0.0, "must be >= 0");
  check(g.kd, "kd", g.kd >= 0.0, "must be >= 0");
  check(g.max_throttle, "max_throttle", g.max_throttle > 0.0 && g.max_throttle <= 1.0,
        "must lie in (0, 1]");
  check(g.brake_speed, "brake_speed", g.brake_speed > 0.0 && g.brake_speed < 1.0,
        "must lie in (0, 1)");
  return errors;
}

inline void validate(const GainSet& g) {
  const auto errors = gain_errors(g);
  if (!errors.empty()) {
    throw InvalidInput("field '" + errors.front().first + "' " + errors.front().second);
  }
}

inline constexpr std::size_t kDefaultWindow = 20;

/// Sliding error window for the integral term plus the previous error for the
/// derivative term.
struct PidState {
  std::deque<double> error_window;
  double prev_error = 0.0;
  std::size_t capacity = kDefaultWindow;

  std::size_t window_len() const { return error_window.size(); }

  friend bool operator==(const PidState&, const PidState&) = default;
};

inline PidState reset(const PidState& pid) {
  PidState fresh;
  fresh.capacity = pid.capacity;
  return fresh;
}

struct LongitudinalCommand {
  double throttle = 0.0;
  double brake = 0.0;
};

struct LongitudinalResult {
  LongitudinalCommand command;
  PidState pid;
};

/// One tick of the longitudinal PID. The integral term is the mean of the last
/// `capacity` errors, the derivative is the per-tick error difference.
inline LongitudinalResult longitudinal_step(const GainSet& gains, const PidState& pid,
                                            double v_ref, double v) {
  require_finite(v_ref, "v_ref");
  require_finite(v, "v");
  require(v_ref >= 0.0, "field 'v_ref' must be >= 0");
  require(v >= 0.0, "field 'v' must be >= 0");
  validate(gains);
  require(pid.capacity > 0, "field 'capacity' must be > 0");

  const double error = v_ref - v;

  LongitudinalResult out;
  out.pid = pid;
  out.pid.error_window.push_back(error);
  while (out.pid.error_window.size() > out.pid.capacity) out.pid.error_window.pop_front();

  const auto& window = out.pid.error_window;
  const double integral =
      std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  const double derivative = error - pid.prev_error;
  out.pid.prev_error = error;

  const double u = gains.kp * error + gains.ki * integral + gains.kd * derivative;
  out.command.throttle = clamp(u, 0.0, gains.max_throttle);
  if (v_ref < gains.brake_speed * v) {
    out.command.brake = 1.0;
    out.command.throttle = 0.0;
  }
  return out;
}

inline constexpr double kLateralHeadingGain = 0.8;
inline constexpr double kLateralOffsetGain = 0.2;

/// Fixed lateral law; not part of the tuned surface.
inline double lateral_step(double heading_error, double lateral_offset) {
  require_finite(heading_error, "heading_error");
  require_finite(lateral_offset, "lateral_offset");
  return clamp(-kLateralHeadingGain * heading_error - kLateralOffsetGain * lateral_offset, -1.0,
               1.0);
}

}  // namespace drivetune::control
