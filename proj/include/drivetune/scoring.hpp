#pragma once

// Leaderboard-style rubric: infraction detection, penalty products, shutdown
// events, route completion and global aggregation.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drivetune/common.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/trace.hpp"

namespace drivetune::scoring {

enum class InfractionKind {
  CollisionPedestrian,
  CollisionVehicle,
  CollisionStatic,
  RedLight,
  StopSign,
  OffRoad,
};

inline constexpr std::array<InfractionKind, 6> kAllInfractions{
    InfractionKind::CollisionPedestrian, InfractionKind::CollisionVehicle,
    InfractionKind::CollisionStatic,     InfractionKind::RedLight,
    InfractionKind::StopSign,            InfractionKind::OffRoad};

inline const char* to_string(InfractionKind k) {
  switch (k) {
    case InfractionKind::CollisionPedestrian: return "collision_pedestrian";
    case InfractionKind::CollisionVehicle: return "collision_vehicle";
    case InfractionKind::CollisionStatic: return "collision_static";
    case InfractionKind::RedLight: return "red_light";
    case InfractionKind::StopSign: return "stop_sign";
    case InfractionKind::OffRoad: return "off_road";
  }
  throw InvalidInput("unknown infraction kind");
}

/// The rubric is closed: anything outside it is an error.
inline InfractionKind parse_infraction(std::string_view s) {
  for (auto k : kAllInfractions) {
    if (s == to_string(k)) return k;
  }
  throw InvalidInput("unknown infraction kind '" + std::string(s) + "'");
}

/// Multiplicative coefficient of one event. Off-road has no fixed
/// coefficient; see penalty_score.
inline double coefficient(InfractionKind k) {
  switch (k) {
    case InfractionKind::CollisionPedestrian: return 0.5;
    case InfractionKind::CollisionVehicle: return 0.6;
    case InfractionKind::CollisionStatic: return 0.65;
    case InfractionKind::RedLight: return 0.7;
    case InfractionKind::StopSign: return 0.8;
    case InfractionKind::OffRoad: return 1.0;
  }
  throw InvalidInput("unknown infraction kind");
}

struct InfractionEvent {
  InfractionKind kind = InfractionKind::CollisionVehicle;
  double time = 0.0;
  double arc_position = 0.0;
  std::string detail;
  double off_road_fraction = 0.0;  // only for OffRoad

  friend bool operator==(const InfractionEvent&, const InfractionEvent&) = default;
};

enum class ShutdownKind { RouteDeviation, AgentBlocked, SimulationTimeout, RouteTimeout };

inline const char* to_string(ShutdownKind k) {
  switch (k) {
    case ShutdownKind::RouteDeviation: return "route_deviation";
    case ShutdownKind::AgentBlocked: return "agent_blocked";
    case ShutdownKind::SimulationTimeout: return "simulation_timeout";
    case ShutdownKind::RouteTimeout: return "route_timeout";
  }
  throw InvalidInput("unknown shutdown kind");
}

inline ShutdownKind parse_shutdown(std::string_view s) {
  for (auto k : {ShutdownKind::RouteDeviation, ShutdownKind::AgentBlocked,
                 ShutdownKind::SimulationTimeout, ShutdownKind::RouteTimeout}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidInput("unknown shutdown kind '" + std::string(s) + "'");
}

struct ShutdownEvent {
  ShutdownKind kind = ShutdownKind::RouteTimeout;
  double time = 0.0;
  std::int64_t tick = 0;

  friend bool operator==(const ShutdownEvent&, const ShutdownEvent&) = default;
};

// Shutdown thresholds.
inline constexpr double kRouteDeviationLimit = 30.0;  // m
inline constexpr double kBlockedDuration = 180.0;     // s
inline constexpr double kBlockedSpeed = 0.1;          // m/s
inline constexpr double kHeartbeatTimeout = 60.0;     // s
inline constexpr double kStopSignSpeed = 0.1;         // m/s

/// How the off-road factor is read. OffRoadFraction multiplies by
/// (1 - off-road arc / route length); UncompletedFraction multiplies by
/// (1 - uncompleted share of the route).
enum class OffRoadRule { OffRoadFraction, UncompletedFraction };

/// Product of per-event coefficients; 1 for a clean run. Off-road contributes
/// once per run.
inline double penalty_score(const std::vector<InfractionEvent>& infractions, double completion,
                            OffRoadRule rule = OffRoadRule::OffRoadFraction) {
  require_finite(completion, "completion");
  require(completion >= 0.0 && completion <= 100.0, "field 'completion' outside [0, 100]");
  double penalty = 1.0;
  double off_road = 0.0;
  bool any_off_road = false;
  for (const auto& e : infractions) {
    if (e.kind == InfractionKind::OffRoad) {
      any_off_road = true;
      off_road += e.off_road_fraction;
      continue;
    }
    penalty *= coefficient(e.kind);
  }
  if (any_off_road) {
    const double share = rule == OffRoadRule::OffRoadFraction ? std::clamp(off_road, 0.0, 1.0)
                                                              : 1.0 - completion / 100.0;
    penalty *= 1.0 - share;
  }
  return penalty;
}

// ---------------------------------------------------------------------------
// Streaming detectors

/// Watches a run tick by tick and reports the first shutdown condition.
class ShutdownMonitor {
public:
  ShutdownMonitor(const scenario::Scenario& scenario, double dt, std::int64_t tick_cap = 0)
      : scenario_(&scenario),
        blocked_ticks_(static_cast<std::int64_t>(std::llround(kBlockedDuration / dt))),
        tick_cap_(tick_cap) {}

  std::optional<ShutdownEvent> observe(const TickRecord& r) {
    const auto& route = scenario_->route;
    if (r.state.arc_position >= route.length()) return std::nullopt;  // arrived
    const Point2 ego = route.to_world(r.state.arc_position, r.state.lateral_offset);
    if (route.distance_to(ego) > kRouteDeviationLimit) {
      return ShutdownEvent{ShutdownKind::RouteDeviation, r.time, r.tick};
    }
    if (r.state.speed < kBlockedSpeed) {
      if (still_since_ < 0) still_since_ = r.tick;
      if (r.tick - still_since_ >= blocked_ticks_) {
        return ShutdownEvent{ShutdownKind::AgentBlocked, r.time, r.tick};
      }
    } else {
      still_since_ = -1;
    }
    if (r.time > scenario_->time_budget || (tick_cap_ > 0 && r.tick >= tick_cap_)) {
      return ShutdownEvent{ShutdownKind::RouteTimeout, r.time, r.tick};
    }
    return std::nullopt;
  }

private:
  const scenario::Scenario* scenario_;
  std::int64_t blocked_ticks_;
  std::int64_t tick_cap_;
  std::int64_t still_since_ = -1;  // first tick of the current standstill, -1 while moving
};

inline InfractionKind collision_class(scenario::ActorKind k) {
  switch (k) {
    case scenario::ActorKind::Pedestrian: return InfractionKind::CollisionPedestrian;
    case scenario::ActorKind::Bicycle:
    case scenario::ActorKind::Vehicle: return InfractionKind::CollisionVehicle;
    case scenario::ActorKind::StaticObstacle: return InfractionKind::CollisionStatic;
  }
  return InfractionKind::CollisionVehicle;
}

/// Emits infraction events as ticks arrive; off-road is summarized by
/// finish().
class InfractionDetector {
public:
  InfractionDetector(const scenario::Scenario& scenario, double lane_half_width)
      : scenario_(&scenario), lane_half_width_(lane_half_width) {
    const auto n = scenario.route.control_zones().size();
    zone_min_speed_.assign(n, std::nullopt);
    zone_done_.assign(n, false);
  }

  std::vector<InfractionEvent> observe(const TickRecord& r) {
    std::vector<InfractionEvent> out;
    const auto& route = scenario_->route;
    const double arc = r.state.arc_position;
    const Point2 ego = route.to_world(arc, r.state.lateral_offset);

    if (contact_.size() < r.actors.size()) contact_.resize(r.actors.size(), false);
    for (std::size_t i = 0; i < r.actors.size(); ++i) {
      const auto& a = r.actors[i];
      const bool touching = distance(ego, {a.x, a.y}) < scenario_->ego_radius + a.radius;
      if (touching && !contact_[i]) {
        out.push_back({collision_class(a.kind), r.time, arc,
                       std::string("actor ") + std::to_string(i) + " (" +
                           scenario::to_string(a.kind) + ")",
                       0.0});
      }
      contact_[i] = touching;
    }

    const auto& zones = route.control_zones();
    for (std::size_t z = 0; z < zones.size(); ++z) {
      const auto& zone = zones[z];
      if (zone.kind == ZoneKind::TrafficLight) {
        if (prev_arc_ && *prev_arc_ < zone.start && arc >= zone.start &&
            zone.schedule.is_red(r.time)) {
          out.push_back({InfractionKind::RedLight, r.time, arc, "zone " + std::to_string(z), 0.0});
        }
        continue;
      }
      if (zone_done_[z]) continue;
      if (arc >= zone.start && arc <= zone.end) {
        const double v = r.state.speed;
        zone_min_speed_[z] = zone_min_speed_[z] ? std::min(*zone_min_speed_[z], v) : v;
      } else if (arc > zone.end && (zone_min_speed_[z] || (prev_arc_ && *prev_arc_ < zone.start))) {
        zone_done_[z] = true;
        const double min_speed = zone_min_speed_[z].value_or(r.state.speed);
        if (min_speed > kStopSignSpeed) {
          out.push_back({InfractionKind::StopSign, r.time, arc, "zone " + std::to_string(z), 0.0});
        }
      }
    }

    if (prev_arc_ && std::abs(r.state.lateral_offset) > lane_half_width_) {
      off_road_m_ += std::max(0.0, arc - *prev_arc_);
      if (!off_road_start_) off_road_start_ = std::pair{r.time, arc};
    }
    prev_arc_ = arc;
    return out;
  }

  std::optional<InfractionEvent> finish() const {
    if (!off_road_start_ || off_road_m_ <= 0.0) return std::nullopt;
    const double fraction = std::clamp(off_road_m_ / scenario_->route.length(), 0.0, 1.0);
    return InfractionEvent{InfractionKind::OffRoad, off_road_start_->first,
                           off_road_start_->second,
                           std::to_string(off_road_m_) + " m off road", fraction};
  }

  double off_road_meters() const { return off_road_m_; }

private:
  const scenario::Scenario* scenario_;
  double lane_half_width_;
  std::vector<bool> contact_;
  std::vector<std::optional<double>> zone_min_speed_;
  std::vector<bool> zone_done_;
  std::optional<double> prev_arc_;
  double off_road_m_ = 0.0;
  std::optional<std::pair<double, double>> off_road_start_;
};

// ---------------------------------------------------------------------------
// Batch scoring over finalized traces

inline std::vector<InfractionEvent> detect_infractions(const RunTrace& trace,
                                                       const scenario::Scenario& scenario) {
  validate(trace);
  InfractionDetector detector(scenario, trace.lane_half_width);
  std::vector<InfractionEvent> events;
  for (const auto& r : trace.records) {
    auto found = detector.observe(r);
    events.insert(events.end(), found.begin(), found.end());
  }
  if (auto off = detector.finish()) events.push_back(*off);
  return events;
}

inline std::optional<ShutdownEvent> detect_shutdown(const RunTrace& trace,
                                                    const scenario::Scenario& scenario) {
  ShutdownMonitor monitor(scenario, trace.dt, trace.tick_cap);
  for (const auto& r : trace.records) {
    if (auto s = monitor.observe(r)) return s;
  }
  return std::nullopt;
}

/// Percentage of the route covered on-lane, clamped to [0, 100].
inline double route_completion(const RunTrace& trace, const Route& route) {
  double best = 0.0;
  for (const auto& r : trace.records) {
    if (std::abs(r.state.lateral_offset) <= trace.lane_half_width) {
      best = std::max(best, r.state.arc_position);
    }
  }
  return std::clamp(100.0 * best / route.length(), 0.0, 100.0);
}

struct RunResult {
  std::string scenario_id;
  std::uint64_t repetition = 0;
  double completion = 0.0;  // percent
  std::vector<InfractionEvent> infractions;
  std::optional<ShutdownEvent> shutdown;
  double km_driven = 0.0;
  double penalty = 1.0;
  double score = 0.0;
  std::int64_t ticks = 0;
  std::string trace_checksum;
  std::string note;

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// completion (0-100) times penalty (0-1).
inline double driving_score(double completion, double penalty) { return completion * penalty; }

inline double driving_score(const RunResult& run) {
  return driving_score(run.completion, penalty_score(run.infractions, run.completion));
}

/// Scores a trace end to end. A shutdown truncates the trace at the halting
/// tick so the score is the one current at that moment.
inline RunResult score_trace(const RunTrace& trace, const scenario::Scenario& scenario) {
  validate(trace);
  RunResult result;
  result.scenario_id = trace.scenario_id;
  result.repetition = trace.repetition;
  result.shutdown = detect_shutdown(trace, scenario);
  const RunTrace scored =
      result.shutdown ? truncated(trace, static_cast<std::size_t>(result.shutdown->tick) + 1)
                      : trace;
  result.completion = route_completion(scored, scenario.route);
  result.infractions = detect_infractions(scored, scenario);
  double furthest = 0.0;
  for (const auto& r : scored.records) furthest = std::max(furthest, r.state.arc_position);
  result.km_driven = std::min(furthest, scenario.route.length()) / 1000.0;
  result.penalty = penalty_score(result.infractions, result.completion);
  result.score = driving_score(result.completion, result.penalty);
  result.ticks = static_cast<std::int64_t>(scored.records.size());
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

struct ScenarioScore {
  std::string scenario_id;
  std::size_t runs = 0;
  double mean_score = 0.0;
  double mean_completion = 0.0;
  double mean_penalty = 0.0;

  friend bool operator==(const ScenarioScore&, const ScenarioScore&) = default;
};

struct ScoreCard {
  std::vector<ScenarioScore> scenarios;
  double global_completion = 0.0;
  double global_infraction = 0.0;
  double global_driving_score = 0.0;
  double total_km = 0.0;
  std::map<std::string, double> infractions_per_km;
  std::size_t run_count = 0;

  friend bool operator==(const ScoreCard&, const ScoreCard&) = default;
};

/// Natural order for scenario ids ("S2" before "S10").
inline bool scenario_id_less(const std::string& a, const std::string& b) {
  auto number = [](const std::string& s) -> std::optional<long> {
    if (s.size() < 2 || s[0] != 'S') return std::nullopt;
    long v = 0;
    auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
  };
  const auto na = number(a);
  const auto nb = number(b);
  if (na && nb) return *na < *nb;
  if (na != nb) return na.has_value();
  return a < b;
}

/// Merges runs by scenario id (input order does not matter): per-scenario
/// means over repetitions, global completion = mean completion, global
/// infraction = mean penalty product, global score = their product.
inline ScoreCard aggregate(std::vector<RunResult> runs) {
  require(!runs.empty(), "cannot aggregate an empty run list");
  std::sort(runs.begin(), runs.end(), [](const RunResult& a, const RunResult& b) {
    if (a.scenario_id != b.scenario_id) return scenario_id_less(a.scenario_id, b.scenario_id);
    return a.repetition < b.repetition;
  });

  ScoreCard card;
  card.run_count = runs.size();
  double completion_sum = 0.0;
  double penalty_sum = 0.0;
  std::map<std::string, std::size_t> counts;
  for (auto k : kAllInfractions) counts[to_string(k)] = 0;

  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i;
    ScenarioScore s;
    s.scenario_id = runs[i].scenario_id;
    double score = 0.0;
    double completion = 0.0;
    double penalty = 0.0;
    for (; j < runs.size() && runs[j].scenario_id == s.scenario_id; ++j) {
      const double p = penalty_score(runs[j].infractions, runs[j].completion);
      score += driving_score(runs[j].completion, p);
      completion += runs[j].completion;
      penalty += p;
    }
    s.runs = j - i;
    const auto n = static_cast<double>(s.runs);
    s.mean_score = score / n;
    s.mean_completion = completion / n;
    s.mean_penalty = penalty / n;
    card.scenarios.push_back(s);
    i = j;
  }
  for (const auto& r : runs) {
    completion_sum += r.completion;
    penalty_sum += penalty_score(r.infractions, r.completion);
    card.total_km += r.km_driven;
    for (const auto& e : r.infractions) ++counts[to_string(e.kind)];
  }
  const auto n = static_cast<double>(runs.size());
  card.global_completion = completion_sum / n;
  card.global_infraction = penalty_sum / n;
  card.global_driving_score = card.global_infraction * card.global_completion;
  for (const auto& [kind, count] : counts) {
    card.infractions_per_km[kind] =
        card.total_km > 0.0 ? static_cast<double>(count) / card.total_km : 0.0;
  }
  return card;
}

}  // namespace drivetune::scoring
