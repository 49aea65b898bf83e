#pragma once

// Situation-based blending of the trajectory-branch and control-branch actions.

#include <cmath>
#include <cstddef>
#include <deque>

#include "drivetune/common.hpp"

namespace drivetune::fusion {

enum class Situation { TrajectorySpecialized, ControlSpecialized };

inline constexpr const char* to_string(Situation s) {
  return s == Situation::ControlSpecialized ? "control" : "trajectory";
}

inline constexpr std::size_t kDefaultHistory = 40;  // 2 s at 20 Hz
inline constexpr double kSteerThreshold = 0.1;

/// Recent steering magnitudes, oldest first.
class SituationWindow {
public:
  explicit SituationWindow(std::size_t capacity = kDefaultHistory) : capacity_(capacity) {
    require(capacity > 0, "field 'history' must be > 0");
  }

  void push(double steer_magnitude) {
    require_finite(steer_magnitude, "steer_magnitude");
    entries_.push_back(clamp(std::abs(steer_magnitude), 0.0, 1.0));
    while (entries_.size() > capacity_) entries_.pop_front();
  }

  const std::deque<double>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }

private:
  std::size_t capacity_;
  std::deque<double> entries_;
};

/// ControlSpecialized iff strictly more than half of the entries exceed 0.1.
/// An empty window (start of route) is TrajectorySpecialized.
inline Situation detect_situation(const SituationWindow& window) {
  if (window.empty()) return Situation::TrajectorySpecialized;
  std::size_t above = 0;
  for (double m : window.entries()) {
    if (m > kSteerThreshold) ++above;
  }
  return 2 * above > window.entries().size() ? Situation::ControlSpecialized
                                             : Situation::TrajectorySpecialized;
}

struct FusionWeight {
  double alpha = 0.5;

  explicit FusionWeight(double a = 0.5) : alpha(a) {
    require_finite(a, "alpha");
    require(a >= 0.0 && a <= 0.5, "field 'alpha' outside [0, 0.5]");
  }
};

/// control-specialized:    a = alpha * a_ctl  + (1 - alpha) * a_traj
/// trajectory-specialized: a = alpha * a_traj + (1 - alpha) * a_ctl
/// Blending is componentwise; the smaller of throttle and brake is then zeroed.
inline ControlAction fuse(Situation situation, const ControlAction& a_traj,
                          const ControlAction& a_ctl, FusionWeight w) {
  validate(a_traj);
  validate(a_ctl);
  const double alpha = w.alpha;
  const ControlAction& first = situation == Situation::ControlSpecialized ? a_ctl : a_traj;
  const ControlAction& second = situation == Situation::ControlSpecialized ? a_traj : a_ctl;
  auto mix = [alpha](double x, double y) { return alpha * x + (1.0 - alpha) * y; };

  ControlAction out{mix(first.throttle, second.throttle), mix(first.brake, second.brake),
                    mix(first.steer, second.steer)};
  if (out.throttle > 0.0 && out.brake > 0.0) {
    if (out.throttle <= out.brake) {
      out.throttle = 0.0;
    } else {
      out.brake = 0.0;
    }
  }
  return out;
}

}  // namespace drivetune::fusion
