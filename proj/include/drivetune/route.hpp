#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "drivetune/common.hpp"

namespace drivetune {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double wrap_angle(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

struct SpeedLimitSection {
  double start = 0.0;  // m along the route
  double limit = 0.0;  // m/s

  friend bool operator==(const SpeedLimitSection&, const SpeedLimitSection&) = default;
};

enum class ZoneKind { TrafficLight, StopSign };

/// Fixed-cycle signal: green for `green` seconds out of every `period`,
/// shifted by `offset`. No amber phase.
struct SignalSchedule {
  double period = 30.0;
  double green = 15.0;
  double offset = 0.0;

  bool is_red(double time) const {
    const double phase = std::fmod(time + offset, period);
    return (phase < 0.0 ? phase + period : phase) >= green;
  }

  /// Seconds until the next green-to-red switch; 0 when already red.
  double green_remaining(double time) const {
    double phase = std::fmod(time + offset, period);
    if (phase < 0.0) phase += period;
    return phase >= green ? 0.0 : green - phase;
  }

  friend bool operator==(const SignalSchedule&, const SignalSchedule&) = default;
};

/// Arc interval controlled by a signal or a stop sign. The stop line sits at
/// `start`.
struct ControlZone {
  double start = 0.0;
  double end = 0.0;
  ZoneKind kind = ZoneKind::StopSign;
  SignalSchedule schedule;

  friend bool operator==(const ControlZone&, const ControlZone&) = default;
};

/// Stretch where the trajectory source pushes its waypoints off the lane
/// center (lane-deviation archetype).
struct TrajectoryBias {
  double start = 0.0;
  double end = 0.0;
  double lateral = 0.0;

  friend bool operator==(const TrajectoryBias&, const TrajectoryBias&) = default;
};

/// Piecewise-linear centerline with arc-length parameterization.
class Route {
public:
  Route() = default;

  Route(std::string id, std::vector<Point2> polyline, std::vector<SpeedLimitSection> limits,
        std::vector<ControlZone> zones = {}, std::vector<TrajectoryBias> biases = {})
      : id_(std::move(id)),
        polyline_(std::move(polyline)),
        limits_(std::move(limits)),
        zones_(std::move(zones)),
        biases_(std::move(biases)) {
    require(polyline_.size() >= 2, "route polyline needs at least two points");
    cumulative_.reserve(polyline_.size());
    cumulative_.push_back(0.0);
    for (std::size_t i = 1; i < polyline_.size(); ++i) {
      require_finite(polyline_[i].x, "polyline.x");
      require_finite(polyline_[i].y, "polyline.y");
      const double seg = distance(polyline_[i - 1], polyline_[i]);
      require(seg > 0.0, "route polyline has repeated points");
      cumulative_.push_back(cumulative_.back() + seg);
    }
    require(!limits_.empty() && limits_.front().start == 0.0,
            "speed limit profile must start at arc 0");
    for (std::size_t i = 0; i < limits_.size(); ++i) {
      require(limits_[i].limit > 0.0, "speed limits must be > 0");
      require(i == 0 || limits_[i].start > limits_[i - 1].start,
              "speed limit sections must be strictly increasing");
    }
    for (const auto& z : zones_) {
      require(z.start >= 0.0 && z.end > z.start && z.end <= length(),
              "control zone outside route");
      require(z.schedule.period > 0.0 && z.schedule.green > 0.0 &&
                  z.schedule.green < z.schedule.period,
              "invalid signal schedule");
    }
  }

  const std::string& id() const { return id_; }
  const std::vector<Point2>& polyline() const { return polyline_; }
  const std::vector<SpeedLimitSection>& speed_limits() const { return limits_; }
  const std::vector<ControlZone>& control_zones() const { return zones_; }
  const std::vector<TrajectoryBias>& biases() const { return biases_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

  double speed_limit_at(double arc) const {
    auto it = std::upper_bound(limits_.begin(), limits_.end(), arc,
                               [](double a, const SpeedLimitSection& s) { return a < s.start; });
    return it == limits_.begin() ? limits_.front().limit : std::prev(it)->limit;
  }

  double bias_at(double arc) const {
    for (const auto& b : biases_) {
      if (arc >= b.start && arc < b.end) return b.lateral;
    }
    return 0.0;
  }

  /// Heading of the segment containing `arc` (end segments extend beyond the
  /// route ends).
  double heading_at(double arc) const {
    const std::size_t i = segment_index(arc);
    const Point2 a = polyline_[i];
    const Point2 b = polyline_[i + 1];
    return std::atan2(b.y - a.y, b.x - a.x);
  }

  /// Signed curvature estimated from the heading change over a 4 m window.
  double curvature_at(double arc) const {
    constexpr double half = 2.0;
    return wrap_angle(heading_at(arc + half) - heading_at(arc - half)) / (2.0 * half);
  }

  Point2 point_at(double arc) const {
    const std::size_t i = segment_index(arc);
    const Point2 a = polyline_[i];
    const Point2 b = polyline_[i + 1];
    const double seg = cumulative_[i + 1] - cumulative_[i];
    const double t = (arc - cumulative_[i]) / seg;
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }

  /// Route-frame (arc, lateral) to world coordinates; lateral is left positive.
  Point2 to_world(double arc, double lateral) const {
    const Point2 p = point_at(arc);
    const double h = heading_at(arc);
    return {p.x - lateral * std::sin(h), p.y + lateral * std::cos(h)};
  }

  /// Euclidean distance from `p` to the nearest point of the centerline.
  double distance_to(Point2 p) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < polyline_.size(); ++i) {
      const Point2 a = polyline_[i];
      const Point2 b = polyline_[i + 1];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
      best = std::min(best, distance(p, {a.x + t * dx, a.y + t * dy}));
    }
    return best;
  }

  friend bool operator==(const Route& a, const Route& b) {
    return a.id_ == b.id_ && a.polyline_ == b.polyline_ && a.limits_ == b.limits_ &&
           a.zones_ == b.zones_ && a.biases_ == b.biases_;
  }

private:
  std::size_t segment_index(double arc) const {
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), arc);
    std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    return std::min(i, polyline_.size() - 2);
  }

  std::string id_;
  std::vector<Point2> polyline_;
  std::vector<double> cumulative_;
  std::vector<SpeedLimitSection> limits_;
  std::vector<ControlZone> zones_;
  std::vector<TrajectoryBias> biases_;
};

/// Builds a centerline from straight runs and circular arcs, sampled at about
/// one metre.
class PolylineBuilder {
public:
  explicit PolylineBuilder(Point2 start = {}, double heading = 0.0)
      : points_{start}, heading_(heading) {}

  PolylineBuilder& straight(double length) {
    const int n = std::max(1, static_cast<int>(std::ceil(length)));
    const Point2 origin = points_.back();
    for (int k = 1; k <= n; ++k) {
      const double d = length * k / n;
      points_.push_back({origin.x + d * std::cos(heading_), origin.y + d * std::sin(heading_)});
    }
    return *this;
  }

  /// Positive angle turns left.
  PolylineBuilder& arc(double radius, double angle) {
    const double length = radius * std::abs(angle);
    const int n = std::max(2, static_cast<int>(std::ceil(length)));
    const double sign = angle >= 0.0 ? 1.0 : -1.0;
    const Point2 origin = points_.back();
    const double h0 = heading_;
    // Center sits to the left for left turns.
    const Point2 center{origin.x - sign * radius * std::sin(h0),
                        origin.y + sign * radius * std::cos(h0)};
    for (int k = 1; k <= n; ++k) {
      const double h = h0 + angle * k / n;
      points_.push_back({center.x + sign * radius * std::sin(h),
                         center.y - sign * radius * std::cos(h)});
    }
    heading_ = h0 + angle;
    return *this;
  }

  std::vector<Point2> build() const { return points_; }

private:
  std::vector<Point2> points_;
  double heading_;
};

}  // namespace drivetune
