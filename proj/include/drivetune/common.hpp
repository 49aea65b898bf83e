#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace drivetune {

/// Raised when a value handed to the library violates a documented
/// precondition. The message names the offending field.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline void require_finite(double value, std::string_view field) {
  if (!std::isfinite(value)) {
    throw InvalidInput("non-finite value for field '" + std::string(field) + "'");
  }
}

inline void require(bool condition, std::string_view message) {
  if (!condition) {
    throw InvalidInput(std::string(message));
  }
}

inline double clamp(double value, double lo, double hi) { return std::clamp(value, lo, hi); }

/// Throttle, brake and steer as sent to the vehicle.
/// throttle and brake are never both non-zero.
struct ControlAction {
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
  double steer = 0.0;     // [-1, 1]

  friend bool operator==(const ControlAction&, const ControlAction&) = default;
};

inline void validate(const ControlAction& a) {
  require_finite(a.throttle, "throttle");
  require_finite(a.brake, "brake");
  require_finite(a.steer, "steer");
  require(a.throttle >= 0.0 && a.throttle <= 1.0, "field 'throttle' outside [0, 1]");
  require(a.brake >= 0.0 && a.brake <= 1.0, "field 'brake' outside [0, 1]");
  require(a.steer >= -1.0 && a.steer <= 1.0, "field 'steer' outside [-1, 1]");
}

}  // namespace drivetune
