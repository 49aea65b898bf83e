#pragma once

// Shared fixtures: a straight test route, scripted traces, scratch dirs.

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "drivetune/route.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/trace.hpp"

namespace drivetune::fixtures {

/// Straight route along +x with a single speed limit.
inline Route straight_route(double length = 150.0, double limit = 8.0,
                            std::vector<ControlZone> zones = {}) {
  return Route("straight", PolylineBuilder().straight(length).build(), {{0.0, limit}},
               std::move(zones));
}

inline scenario::Scenario straight_scenario(
    scenario::WeatherKind weather = scenario::WeatherKind::ClearNoon, double length = 150.0,
    std::vector<scenario::ActorScript> actors = {}, double budget = 400.0) {
  scenario::Scenario s;
  s.id = "T0";
  s.index = 0;
  s.route = straight_route(length);
  s.weather = scenario::make_weather(weather);
  s.actors = std::move(actors);
  s.seed = 7;
  s.time_budget = budget;
  return s;
}

/// Trace whose tick k has the given arc, lateral offset and speed.
struct ScriptedTick {
  double arc = 0.0;
  double lateral = 0.0;
  double speed = 0.0;
  std::vector<scenario::ActorPose> actors = {};
};

inline RunTrace scripted_trace(const std::vector<ScriptedTick>& ticks, double dt = 0.05) {
  RunTrace t;
  t.scenario_id = "T0";
  t.dt = dt;
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    TickRecord r;
    r.tick = static_cast<std::int64_t>(k);
    r.time = static_cast<double>(k) * dt;
    r.state.time = r.time;
    r.state.arc_position = ticks[k].arc;
    r.state.lateral_offset = ticks[k].lateral;
    r.state.speed = ticks[k].speed;
    r.actors = ticks[k].actors;
    t.records.push_back(std::move(r));
  }
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("drivetune-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace drivetune::fixtures
