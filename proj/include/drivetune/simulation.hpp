#pragma once

// Closed loop per tick: actors -> references -> situation -> PID and scripted
// control branch -> fusion -> plant -> infraction/shutdown detection.

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "drivetune/control.hpp"
#include "drivetune/fusion.hpp"
#include "drivetune/plant.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/scoring.hpp"
#include "drivetune/trace.hpp"

namespace drivetune::harness {

struct SimConfig {
  plant::PlantParams plant = plant::default_params();
  control::GainSet gains = control::tcp_original();
  std::string gains_name = "tcp-original";
  double alpha = 0.5;
  std::size_t history = fusion::kDefaultHistory;
  std::size_t pid_window = control::kDefaultWindow;
  std::uint64_t seed = 7;
  int repetitions = 3;
  std::string output_dir = "drivetune-out";
  std::int64_t tick_cap = 20000;
  unsigned workers = 1;
  scenario::PlannerParams planner;

  scenario::PlannerParams planner_for_plant() const {
    auto p = planner;
    p.dt = plant.dt;
    p.lane_half_width = plant.lane_half_width;
    return p;
  }
};

inline void validate(const SimConfig& c) {
  plant::validate(c.plant);
  control::validate(c.gains);
  fusion::FusionWeight{c.alpha};
  require(c.history > 0, "field 'history' must be > 0");
  require(c.pid_window > 0, "field 'pid_window' must be > 0");
  require(c.repetitions > 0, "field 'repetitions' must be > 0");
  require(c.tick_cap > 0, "field 'tick_cap' must be > 0");
  require(c.workers > 0, "field 'workers' must be > 0");
}

inline constexpr double kWheelbase = 2.8;       // m
inline constexpr double kMaxSteerAngle = 0.7;   // rad at |steer| = 1

/// Steering a vehicle would need to hold the road's curvature. The plant works
/// in the route frame, so this part is recorded for situation detection but
/// not integrated into heading error.
inline double curvature_feedforward(double curvature) {
  return clamp(curvature * kWheelbase / kMaxSteerAngle, -1.0, 1.0);
}

struct RunOutput {
  scoring::RunResult result;
  RunTrace trace;
  bool cancelled = false;
};

/// Called after every tick; returning false stops the run early.
using TickObserver = std::function<bool(const TickRecord&)>;

inline RunOutput simulate_run(const scenario::Scenario& scenario, const control::GainSet& gains,
                              const SimConfig& config, std::uint64_t repetition = 0,
                              const TickObserver& observer = {}) {
  validate(config);
  control::validate(gains);
  scenario::validate(scenario);

  const auto& pp = config.plant;
  const auto planner = config.planner_for_plant();
  const fusion::FusionWeight weight{config.alpha};

  RunOutput out;
  out.trace.scenario_id = scenario.id;
  out.trace.repetition = repetition;
  out.trace.dt = pp.dt;
  out.trace.lane_half_width = pp.lane_half_width;
  out.trace.tick_cap = config.tick_cap;

  plant::VehicleState state;
  control::PidState pid;
  pid.capacity = config.pid_window;
  fusion::SituationWindow window(config.history);
  auto memory = scenario::PlannerMemory::fresh(scenario, repetition);
  scoring::InfractionDetector infractions(scenario, pp.lane_half_width);
  scoring::ShutdownMonitor shutdowns(scenario, pp.dt, config.tick_cap);

  for (std::int64_t tick = 0;; ++tick) {
    state.time = static_cast<double>(tick) * pp.dt;

    scenario::update_triggers(scenario, state, tick, memory);
    auto actors = scenario::actor_step(scenario, tick, memory.triggers, pp.dt);
    auto ref = scenario::reference_source(scenario, state, tick, memory, planner);
    const auto situation = fusion::detect_situation(window);

    auto longitudinal = control::longitudinal_step(gains, pid, ref.v_ref, ref.measured_speed);
    pid = std::move(longitudinal.pid);
    const ControlAction a_traj{
        longitudinal.command.throttle, longitudinal.command.brake,
        control::lateral_step(state.heading_error, state.lateral_offset - ref.target_lateral)};
    const ControlAction a_fused = fusion::fuse(situation, a_traj, ref.a_ctl, weight);

    const double ff = curvature_feedforward(scenario.route.curvature_at(state.arc_position));
    window.push(std::abs(clamp(a_fused.steer + ff, -1.0, 1.0)));
    scenario::update_stop_signs(scenario, state, ref.measured_speed, memory, planner);

    TickRecord record;
    record.tick = tick;
    record.time = state.time;
    record.state = state;
    record.v_ref = ref.v_ref;
    record.measured_speed = ref.measured_speed;
    record.waypoints = std::move(ref.waypoints);
    record.a_traj = a_traj;
    record.a_ctl = ref.a_ctl;
    record.a_fused = a_fused;
    record.situation = situation;
    record.actors = std::move(actors);

    for (const auto& e : infractions.observe(record)) {
      record.events.emplace_back(scoring::to_string(e.kind));
    }
    const auto shutdown = shutdowns.observe(record);
    const bool arrived = state.arc_position >= scenario.route.length();
    if (shutdown && !arrived) record.events.emplace_back(scoring::to_string(shutdown->kind));

    out.trace.records.push_back(std::move(record));
    if (observer && !observer(out.trace.records.back())) {
      out.cancelled = true;
      break;
    }
    if (arrived || shutdown) break;

    state = plant::step(state, a_fused, pp);
  }

  out.result = scoring::score_trace(out.trace, scenario);
  return out;
}

/// A run whose simulation threw scores as a halted run with zero completion.
inline scoring::RunResult failed_run(const std::string& id, std::uint64_t repetition,
                                     const std::string& what) {
  scoring::RunResult r;
  r.scenario_id = id;
  r.repetition = repetition;
  r.shutdown = scoring::ShutdownEvent{scoring::ShutdownKind::SimulationTimeout, 0.0, 0};
  r.penalty = 1.0;
  r.note = "simulation failure: " + what;
  return r;
}

/// Receives each finished run on the worker that produced it; may adjust the
/// result (e.g. record a trace checksum) before it is stored.
using RunSink = std::function<void(const scenario::Scenario&, RunOutput&)>;

struct SuiteOutput {
  std::vector<scoring::RunResult> runs;  // scenario-major, repetition-minor
};

/// Runs every scenario `repetitions` times. Runs are independent, so the
/// worker count never changes the results.
inline SuiteOutput run_suite(const std::vector<scenario::Scenario>& suite,
                             const control::GainSet& gains, const SimConfig& config,
                             const RunSink& sink = {}) {
  validate(config);
  const auto reps = static_cast<std::size_t>(config.repetitions);
  const std::size_t jobs = suite.size() * reps;
  SuiteOutput out;
  out.runs.resize(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const auto& sc = suite[j / reps];
      const auto rep = static_cast<std::uint64_t>(j % reps);
      try {
        auto run = simulate_run(sc, gains, config, rep);
        if (sink) sink(sc, run);
        out.runs[j] = std::move(run.result);
      } catch (const std::exception& e) {
        out.runs[j] = failed_run(sc.id, rep, e.what());
      }
    }
  };
  const unsigned n = std::max(1U, std::min<unsigned>(config.workers, static_cast<unsigned>(jobs)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace drivetune::harness
