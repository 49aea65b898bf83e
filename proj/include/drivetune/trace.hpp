#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drivetune/common.hpp"
#include "drivetune/fusion.hpp"
#include "drivetune/plant.hpp"
#include "drivetune/scenario.hpp"

namespace drivetune {

/// Everything observed and commanded at one tick. `state` is the vehicle
/// state at `time = tick * dt`, before the tick's command is applied.
struct TickRecord {
  std::int64_t tick = 0;
  double time = 0.0;
  plant::VehicleState state;
  double v_ref = 0.0;
  double measured_speed = 0.0;
  std::vector<scenario::Waypoint> waypoints;
  ControlAction a_traj;
  ControlAction a_ctl;
  ControlAction a_fused;
  fusion::Situation situation = fusion::Situation::TrajectorySpecialized;
  std::vector<scenario::ActorPose> actors;
  std::vector<std::string> events;

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

struct RunTrace {
  std::string scenario_id;
  std::uint64_t repetition = 0;
  double dt = 0.05;
  double lane_half_width = 1.75;
  std::int64_t tick_cap = 0;  // 0 means uncapped
  std::vector<TickRecord> records;

  friend bool operator==(const RunTrace&, const RunTrace&) = default;
};

/// Ticks contiguous from zero, timestamps equal to tick * dt.
inline void validate(const RunTrace& trace) {
  require(trace.dt > 0.0, "trace dt must be > 0");
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    require(r.tick == static_cast<std::int64_t>(i), "trace ticks are not contiguous from 0");
    require(r.time == static_cast<double>(r.tick) * trace.dt, "trace timestamp != tick * dt");
    plant::validate(r.state);
  }
}

inline RunTrace truncated(const RunTrace& trace, std::size_t records) {
  RunTrace out = trace;
  if (out.records.size() > records) out.records.resize(records);
  return out;
}

}  // namespace drivetune
