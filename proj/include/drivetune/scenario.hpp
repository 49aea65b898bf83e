#pragma once

// The 16 route x weather scenarios, scripted actors, and the scripted
// trajectory/control sources that feed the controller each tick.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drivetune/common.hpp"
#include "drivetune/control.hpp"
#include "drivetune/noise.hpp"
#include "drivetune/plant.hpp"
#include "drivetune/route.hpp"

namespace drivetune::scenario {

// ---------------------------------------------------------------------------
// Weather

enum class WeatherKind { ClearNoon, CloudySunset, SoftRainDawn, HardRainNight };

inline constexpr std::array<WeatherKind, 4> kAllWeathers{
    WeatherKind::ClearNoon, WeatherKind::CloudySunset, WeatherKind::SoftRainDawn,
    WeatherKind::HardRainNight};

inline constexpr const char* to_string(WeatherKind w) {
  switch (w) {
    case WeatherKind::ClearNoon: return "ClearNoon";
    case WeatherKind::CloudySunset: return "CloudySunset";
    case WeatherKind::SoftRainDawn: return "SoftRainDawn";
    case WeatherKind::HardRainNight: return "HardRainNight";
  }
  return "?";
}

inline std::optional<WeatherKind> parse_weather(std::string_view s) {
  for (auto w : kAllWeathers) {
    if (s == to_string(w)) return w;
  }
  return std::nullopt;
}

/// Weather acts on observations only: speed noise, waypoint jitter and a
/// perception delay for actors and signals.
struct WeatherProfile {
  WeatherKind kind = WeatherKind::ClearNoon;
  double severity = 0.0;
  double speed_noise_sigma = 0.0;     // m/s
  double waypoint_jitter_sigma = 0.0; // m
  int detection_delay_ticks = 0;

  friend bool operator==(const WeatherProfile&, const WeatherProfile&) = default;
};

inline constexpr double kSpeedNoisePerSeverity = 0.4;
inline constexpr double kJitterPerSeverity = 0.3;
inline constexpr double kDelayTicksPerSeverity = 8.0;

inline double default_severity(WeatherKind w) {
  switch (w) {
    case WeatherKind::ClearNoon: return 0.0;
    case WeatherKind::CloudySunset: return 0.25;
    case WeatherKind::SoftRainDawn: return 0.5;
    case WeatherKind::HardRainNight: return 1.0;
  }
  return 0.0;
}

inline WeatherProfile make_weather(WeatherKind w, double severity) {
  require_finite(severity, "severity");
  require(severity >= 0.0 && severity <= 1.0, "field 'severity' outside [0, 1]");
  return {w, severity, kSpeedNoisePerSeverity * severity, kJitterPerSeverity * severity,
          static_cast<int>(std::lround(kDelayTicksPerSeverity * severity))};
}

inline WeatherProfile make_weather(WeatherKind w) { return make_weather(w, default_severity(w)); }

// ---------------------------------------------------------------------------
// Actors

enum class ActorKind { Pedestrian, Bicycle, Vehicle, StaticObstacle };

inline constexpr const char* to_string(ActorKind k) {
  switch (k) {
    case ActorKind::Pedestrian: return "pedestrian";
    case ActorKind::Bicycle: return "bicycle";
    case ActorKind::Vehicle: return "vehicle";
    case ActorKind::StaticObstacle: return "static_obstacle";
  }
  return "?";
}

inline std::optional<ActorKind> parse_actor_kind(std::string_view s) {
  for (auto k : {ActorKind::Pedestrian, ActorKind::Bicycle, ActorKind::Vehicle,
                 ActorKind::StaticObstacle}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Constant route-frame velocity held for `duration` seconds.
struct MotionPhase {
  double duration = 0.0;
  double v_arc = 0.0;
  double v_lateral = 0.0;

  friend bool operator==(const MotionPhase&, const MotionPhase&) = default;
};

/// Scripted actor. It waits at its start pose until the ego first reaches
/// `trigger_arc`, then plays its phases in order and stays put afterwards.
struct ActorScript {
  ActorKind kind = ActorKind::Vehicle;
  std::string label;
  double trigger_arc = 0.0;
  double start_arc = 0.0;
  double start_lateral = 0.0;
  std::vector<MotionPhase> motion;
  double radius = 1.0;

  friend bool operator==(const ActorScript&, const ActorScript&) = default;
};

struct Scenario {
  std::string id;
  int index = 0;
  Route route;
  WeatherProfile weather;
  std::vector<ActorScript> actors;
  std::uint64_t seed = 0;
  double time_budget = 0.0;  // s
  double ego_radius = 1.2;   // m

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline void validate(const Scenario& s) {
  require(s.time_budget > 0.0, "field 'time_budget' must be > 0");
  require(s.ego_radius >= 0.0, "field 'ego_radius' must be >= 0");
  for (const auto& a : s.actors) {
    require(a.radius >= 0.0, "actor radius must be >= 0");
    require(a.trigger_arc >= 0.0 && a.trigger_arc <= s.route.length(),
            "actor trigger outside route");
    for (const auto& m : a.motion) {
      require(m.duration >= 0.0, "motion phase duration must be >= 0");
    }
  }
}

struct ActorPose {
  ActorKind kind = ActorKind::Vehicle;
  double arc = 0.0;
  double lateral = 0.0;
  double x = 0.0;
  double y = 0.0;
  double v_arc = 0.0;
  double radius = 0.0;

  friend bool operator==(const ActorPose&, const ActorPose&) = default;
};

/// Tick at which each actor was triggered, if it has been.
using TriggerTicks = std::vector<std::optional<std::int64_t>>;

inline ActorPose actor_pose(const Scenario& scenario, const ActorScript& actor, double elapsed) {
  ActorPose pose;
  pose.kind = actor.kind;
  pose.radius = actor.radius;
  pose.arc = actor.start_arc;
  pose.lateral = actor.start_lateral;
  double remaining = std::max(0.0, elapsed);
  for (const auto& phase : actor.motion) {
    const double span = std::min(remaining, phase.duration);
    pose.arc += phase.v_arc * span;
    pose.lateral += phase.v_lateral * span;
    if (remaining < phase.duration) {
      pose.v_arc = elapsed > 0.0 ? phase.v_arc : 0.0;
      break;
    }
    remaining -= phase.duration;
  }
  const Point2 w = scenario.route.to_world(pose.arc, pose.lateral);
  pose.x = w.x;
  pose.y = w.y;
  return pose;
}

/// Actor poses at `tick`. Deterministic in (scenario, tick, triggers).
inline std::vector<ActorPose> actor_step(const Scenario& scenario, std::int64_t tick,
                                         const TriggerTicks& triggers, double dt) {
  std::vector<ActorPose> poses;
  poses.reserve(scenario.actors.size());
  for (std::size_t i = 0; i < scenario.actors.size(); ++i) {
    double elapsed = 0.0;
    if (i < triggers.size() && triggers[i] && tick >= *triggers[i]) {
      elapsed = static_cast<double>(tick - *triggers[i]) * dt;
    }
    poses.push_back(actor_pose(scenario, scenario.actors[i], elapsed));
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Suite

inline constexpr int kRouteCount = 4;
inline constexpr int kSuiteSize = kRouteCount * 4;

namespace detail {

/// Nominal traversal time at the posted limits.
inline double nominal_time(const Route& r) {
  double t = 0.0;
  const auto& limits = r.speed_limits();
  for (std::size_t i = 0; i < limits.size(); ++i) {
    const double end = i + 1 < limits.size() ? limits[i + 1].start : r.length();
    t += (end - limits[i].start) / limits[i].limit;
  }
  return t;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * noise::to_unit(rng());
}

}  // namespace detail

/// Signal cycle shared by the built-in routes.
inline SignalSchedule signal(double offset) { return {32.0, 18.0, offset}; }

/// The four synthetic routes. Routes 0 and 1 are short town loops with
/// T-junctions; routes 2 and 3 are longer multi-lane city routes with signals.
inline Route build_route(int index) {
  using std::numbers::pi;
  switch (index) {
    case 0: {
      auto poly = PolylineBuilder()
                      .straight(70)
                      .arc(10, -pi / 2)
                      .straight(80)
                      .arc(10, pi / 2)
                      .straight(60)
                      .build();
      return Route("R0", poly, {{0, 8.0}, {64, 4.0}, {88, 8.0}, {164, 4.0}, {184, 8.0}},
                   {{58, 66, ZoneKind::StopSign, {}},
                    {140, 148, ZoneKind::TrafficLight, signal(4.0)}});
    }
    case 1: {
      auto poly = PolylineBuilder()
                      .straight(60)
                      .arc(12, -pi / 2)
                      .straight(100)
                      .arc(10, pi / 2)
                      .straight(70)
                      .build();
      return Route("R1", poly, {{0, 8.0}, {55, 4.0}, {80, 8.0}, {174, 4.0}, {196, 8.0}},
                   {{166, 174, ZoneKind::StopSign, {}}});
    }
    case 2: {
      auto poly = PolylineBuilder()
                      .straight(150)
                      .arc(15, pi / 2)
                      .straight(200)
                      .arc(20, -pi / 2)
                      .straight(150)
                      .build();
      return Route("R2", poly, {{0, 11.0}, {142, 5.0}, {176, 11.0}, {366, 6.0}, {406, 11.0}},
                   {{136, 144, ZoneKind::TrafficLight, signal(0.0)},
                    {352, 360, ZoneKind::TrafficLight, signal(11.0)}});
    }
    case 3: {
      auto poly = PolylineBuilder()
                      .straight(200)
                      .straight(150)
                      .arc(25, -pi / 2)
                      .straight(200)
                      .straight(100)
                      .build();
      const double turn_start = 350.0;
      const double turn_len = 25.0 * pi / 2;
      return Route("R3", poly,
                   {{0, 12.0}, {340, 6.0}, {turn_start + turn_len + 6, 12.0}},
                   {{186, 194, ZoneKind::TrafficLight, signal(7.0)},
                    {560, 568, ZoneKind::TrafficLight, signal(20.0)}},
                   {{turn_start + 4, turn_start + turn_len - 4, -1.7}});
    }
    default:
      throw InvalidInput("route index must be in [0, 3]");
  }
}

/// Fixed crash archetypes per route; route 3's is the trajectory bias built
/// into the route itself.
inline std::vector<ActorScript> archetype_actors(int route_index) {
  std::vector<ActorScript> actors;
  switch (route_index) {
    case 1:
      // Bicycle crossing from the right roadside.
      actors.push_back({ActorKind::Bicycle, "bicycle-crossing", 118.0, 130.0, -4.5,
                        {{3.0, 0.0, 3.0}}, 0.6});
      // Advertising board close to the lane edge after the stop sign.
      actors.push_back({ActorKind::StaticObstacle, "advertising-board", 0.0, 210.0, 3.0, {}, 0.9});
      break;
    case 2:
      // Oncoming vehicle cutting across the left turn.
      actors.push_back({ActorKind::Vehicle, "turning-conflict", 132.0, 150.0, 22.0,
                        {{6.0, 0.0, -7.0}}, 1.2});
      break;
    default:
      break;
  }
  return actors;
}

/// Randomly generated traffic participants for one scenario.
inline std::vector<ActorScript> random_traffic(std::uint64_t seed, int index, const Route& route) {
  std::mt19937_64 rng(noise::hash_key({seed, static_cast<std::uint64_t>(index), 0x7472616666ULL}));
  const double len = route.length();
  const int count = 1 + static_cast<int>(rng() % 3);
  std::vector<ActorScript> actors;
  for (int n = 0; n < count; ++n) {
    const auto kind = rng() % 3;
    const double side = (rng() & 1U) ? 1.0 : -1.0;
    if (kind == 0) {
      const double trigger = detail::uniform(rng, 30.0, len - 80.0);
      const double speed = detail::uniform(rng, 1.1, 1.6);
      actors.push_back({ActorKind::Pedestrian, "pedestrian-crossing", trigger, trigger + 24.0,
                        5.0 * side, {{10.0 / speed, 0.0, -side * speed}}, 0.4});
    } else if (kind == 1) {
      const double start = detail::uniform(rng, 25.0, len * 0.5);
      const double speed = detail::uniform(rng, 5.0, 8.0);
      const double first = detail::uniform(rng, 6.0, 14.0);
      actors.push_back({ActorKind::Vehicle, "lead-vehicle", 0.0, start, 0.0,
                        {{first, speed, 0.0}, {3.0, 0.0, 0.0}, {1.0e4, speed, 0.0}}, 1.2});
    } else {
      const double at = detail::uniform(rng, 30.0, len - 30.0);
      actors.push_back({ActorKind::StaticObstacle, "parked-vehicle", 0.0, at,
                        side * detail::uniform(rng, 3.8, 4.3), {}, 1.0});
    }
  }
  return actors;
}

inline std::string scenario_id(int index) { return "S" + std::to_string(index); }

inline constexpr double kBudgetFactor = 2.0;
inline constexpr double kBudgetSlack = 200.0;  // s, longer than the blocked-agent rule

/// S0..S15: route-major, weather-minor.
inline std::vector<Scenario> build_suite(std::uint64_t seed) {
  std::vector<Scenario> suite;
  suite.reserve(kSuiteSize);
  for (int r = 0; r < kRouteCount; ++r) {
    const Route route = build_route(r);
    const double budget = kBudgetFactor * detail::nominal_time(route) + kBudgetSlack;
    for (int w = 0; w < 4; ++w) {
      Scenario s;
      s.index = r * 4 + w;
      s.id = scenario_id(s.index);
      s.route = route;
      s.weather = make_weather(kAllWeathers[static_cast<std::size_t>(w)]);
      s.actors = archetype_actors(r);
      auto traffic = random_traffic(seed, s.index, route);
      s.actors.insert(s.actors.end(), traffic.begin(), traffic.end());
      s.seed = seed;
      s.time_budget = budget;
      validate(s);
      suite.push_back(std::move(s));
    }
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Scripted references

struct PlannerParams {
  double dt = 0.05;
  double lane_half_width = 1.75;
  double waypoint_spacing = 3.0;     // m between the four waypoints
  double perception_range = 60.0;    // m
  double min_gap = 8.0;              // m, edge to edge
  double comfort_decel = 1.5;        // m/s^2 for stop profiles
  double max_decel = 6.0;            // m/s^2, can-stop test at signals
  double amber_time = 3.0;           // s of remaining green treated as amber
  double path_margin = 0.1;          // m added to the in-path band
  double path_margin_per_severity = 0.5;
  double stop_line_setback = 1.0;    // m before a signal's stop line
  double stop_sign_target = 3.0;     // m past a stop sign's line
  int stop_confirm_ticks = 5;        // consecutive stopped readings to serve a stop sign
  double stop_buffer = 2.0;          // m before a stop point where v_ref reaches 0
  double stopped_speed = 0.1;        // m/s
};

/// Per-run planner state that the harness advances each tick.
struct PlannerMemory {
  std::uint64_t repetition = 0;
  TriggerTicks triggers;
  std::vector<bool> stop_served;
  std::vector<int> stopped_ticks;

  static PlannerMemory fresh(const Scenario& s, std::uint64_t repetition = 0) {
    PlannerMemory m;
    m.repetition = repetition;
    m.triggers.assign(s.actors.size(), std::nullopt);
    m.stop_served.assign(s.route.control_zones().size(), false);
    m.stopped_ticks.assign(s.route.control_zones().size(), 0);
    return m;
  }
};

inline void update_triggers(const Scenario& s, const plant::VehicleState& ego, std::int64_t tick,
                            PlannerMemory& memory) {
  for (std::size_t i = 0; i < s.actors.size(); ++i) {
    if (!memory.triggers[i] && ego.arc_position >= s.actors[i].trigger_arc) {
      memory.triggers[i] = tick;
    }
  }
}

inline void update_stop_signs(const Scenario& s, const plant::VehicleState& ego,
                              double measured_speed, PlannerMemory& memory,
                              const PlannerParams& p = {}) {
  const auto& zones = s.route.control_zones();
  for (std::size_t i = 0; i < zones.size(); ++i) {
    if (zones[i].kind != ZoneKind::StopSign || memory.stop_served[i]) continue;
    const bool near = ego.arc_position >= zones[i].start - 0.5 && ego.arc_position <= zones[i].end;
    memory.stopped_ticks[i] = near && measured_speed < p.stopped_speed ? memory.stopped_ticks[i] + 1 : 0;
    if (memory.stopped_ticks[i] >= p.stop_confirm_ticks) memory.stop_served[i] = true;
  }
}

struct Waypoint {
  double arc = 0.0;
  double lateral = 0.0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct Reference {
  std::vector<Waypoint> waypoints;
  double v_ref = 0.0;
  double measured_speed = 0.0;
  double target_lateral = 0.0;
  ControlAction a_ctl;
};

inline double measured_speed(const Scenario& s, const plant::VehicleState& ego, std::int64_t tick,
                             std::uint64_t repetition) {
  const double n = noise::standard_normal(s.seed, static_cast<std::uint64_t>(s.index), repetition,
                                          static_cast<std::uint64_t>(tick),
                                          noise::Stream::SpeedMeasurement);
  return std::max(0.0, ego.speed + s.weather.speed_noise_sigma * n);
}

inline double stop_profile(double distance, double decel) {
  return std::sqrt(2.0 * decel * std::max(0.0, distance));
}

/// Scripted control branch: proportional speed rule and the lateral law.
inline ControlAction scripted_control(double v_ref, double v_meas, double heading_error,
                                      double lateral_error) {
  const double dv = v_ref - v_meas;
  ControlAction a;
  a.throttle = clamp(0.5 * dv, 0.0, 0.75);
  a.brake = dv < -1.0 ? clamp(-0.25 * dv, 0.0, 1.0) : 0.0;
  if (a.brake > 0.0) a.throttle = 0.0;
  a.steer = control::lateral_step(heading_error, lateral_error);
  return a;
}

/// Four waypoints ahead, the speed reference and the control-branch action.
inline Reference reference_source(const Scenario& s, const plant::VehicleState& ego,
                                  std::int64_t tick, const PlannerMemory& memory,
                                  const PlannerParams& p = {}) {
  Reference ref;
  ref.measured_speed = measured_speed(s, ego, tick, memory.repetition);
  const double len = s.route.length();
  if (ego.arc_position >= len) {
    ref.a_ctl = {0.0, 1.0, 0.0};
    return ref;
  }

  const auto key = [&](noise::Stream stream, std::uint64_t lane) {
    return noise::standard_normal(s.seed, static_cast<std::uint64_t>(s.index), memory.repetition,
                                  static_cast<std::uint64_t>(tick), stream, lane);
  };
  const double sigma = s.weather.waypoint_jitter_sigma;
  double lateral_sum = 0.0;
  for (std::uint64_t i = 1; i <= 4; ++i) {
    const double nominal_arc = ego.arc_position + p.waypoint_spacing * static_cast<double>(i);
    Waypoint w;
    w.arc = nominal_arc + sigma * key(noise::Stream::WaypointArc, i);
    w.lateral = s.route.bias_at(nominal_arc) + sigma * key(noise::Stream::WaypointLateral, i);
    const Point2 world = s.route.to_world(w.arc, w.lateral);
    w.x = world.x;
    w.y = world.y;
    lateral_sum += w.lateral;
    ref.waypoints.push_back(w);
  }
  ref.target_lateral = lateral_sum / 4.0;

  const double v = ref.measured_speed;
  const double arc = ego.arc_position;
  double v_ref = s.route.speed_limit_at(arc);

  // Slow down ahead of lower limits.
  for (const auto& section : s.route.speed_limits()) {
    const double d = section.start - arc;
    if (d > 0.0 && d <= p.perception_range) {
      v_ref = std::min(v_ref, std::sqrt(section.limit * section.limit + 2.0 * p.comfort_decel * d));
    }
  }

  // Actors, perceived with the weather's detection delay.
  const std::int64_t seen_tick = std::max<std::int64_t>(0, tick - s.weather.detection_delay_ticks);
  const auto seen = actor_step(s, seen_tick, memory.triggers, p.dt);
  const double margin = p.path_margin + p.path_margin_per_severity * s.weather.severity;
  for (const auto& a : seen) {
    const double ahead = a.arc - arc;
    if (ahead <= 0.0 || ahead > p.perception_range) continue;
    if (std::abs(a.lateral) >= p.lane_half_width + a.radius + margin) continue;
    const double gap = ahead - s.ego_radius - a.radius;
    const double v_obs =
        gap <= p.min_gap ? 0.0
                         : std::max(0.0, a.v_arc) + stop_profile(gap - p.min_gap, p.comfort_decel);
    v_ref = std::min(v_ref, v_obs);
  }

  // Stop signs and signals.
  const double seen_time = static_cast<double>(seen_tick) * p.dt;
  const auto& zones = s.route.control_zones();
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const auto& z = zones[i];
    if (z.kind == ZoneKind::StopSign) {
      if (memory.stop_served[i] || arc > z.end || z.start - arc > p.perception_range) continue;
      const double d = z.start + p.stop_sign_target - arc;
      v_ref = std::min(v_ref, stop_profile(d - p.stop_buffer, p.comfort_decel));
    } else {
      const double d = z.start - p.stop_line_setback - arc;
      if (arc >= z.start || z.start - arc > p.perception_range) continue;
      const bool can_stop = z.start - arc >= v * v / (2.0 * p.max_decel);
      const bool red = z.schedule.is_red(seen_time);
      const bool amber = !red && z.schedule.green_remaining(seen_time) < p.amber_time;
      if ((red || amber) && can_stop) {
        v_ref = std::min(v_ref, stop_profile(d - p.stop_buffer, p.comfort_decel));
      }
    }
  }

  ref.v_ref = std::max(0.0, v_ref);
  ref.a_ctl = scripted_control(ref.v_ref, v, ego.heading_error,
                               ego.lateral_offset - s.route.bias_at(arc));
  return ref;
}

}  // namespace drivetune::scenario
