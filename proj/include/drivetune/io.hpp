#pragma once

// Persistence: JSON configuration, versioned suite files, line-delimited
// traces with an FNV-1a checksum, scorecards, chart data and tuner logs.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivetune/control.hpp"
#include "drivetune/plant.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/scoring.hpp"
#include "drivetune/simulation.hpp"
#include "drivetune/trace.hpp"
#include "drivetune/tuner.hpp"

namespace drivetune::io {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kOutputDirEnv = "DRIVETUNE_OUTPUT_DIR";

/// Persisted data that fails its checksum or cannot be parsed.
struct CorruptData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Checksum

class Fnv1a64 {
public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 1099511628211ULL;
    }
  }
  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

private:
  std::uint64_t hash_ = 14695981039346656037ULL;
};

inline std::string fnv1a64(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.hex();
}

// ---------------------------------------------------------------------------
// Field access

template <class T>
T get(const json& j, const std::string& key) {
  if (!j.is_object()) throw InvalidInput("expected an object holding field '" + key + "'");
  const auto it = j.find(key);
  if (it == j.end()) throw InvalidInput("missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw InvalidInput("field '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

/// Rejects keys outside `allowed`; configuration typos must not pass silently.
inline void only_keys(const json& j, std::initializer_list<std::string_view> allowed,
                      const std::string& where) {
  if (!j.is_object()) throw InvalidInput("'" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidInput("unknown field '" + key + "' in " + where);
  }
}

// ---------------------------------------------------------------------------
// Enumerations

inline const char* to_string(ZoneKind k) {
  return k == ZoneKind::TrafficLight ? "traffic_light" : "stop_sign";
}

inline ZoneKind parse_zone_kind(const std::string& s) {
  if (s == "traffic_light") return ZoneKind::TrafficLight;
  if (s == "stop_sign") return ZoneKind::StopSign;
  throw InvalidInput("unknown control zone kind '" + s + "'");
}

inline scenario::WeatherKind parse_weather_kind(const std::string& s) {
  if (auto w = scenario::parse_weather(s)) return *w;
  throw InvalidInput("unknown weather '" + s + "'");
}

inline scenario::ActorKind parse_actor_kind(const std::string& s) {
  if (auto k = scenario::parse_actor_kind(s)) return *k;
  throw InvalidInput("unknown actor kind '" + s + "'");
}

inline fusion::Situation parse_situation(const std::string& s) {
  if (s == "control") return fusion::Situation::ControlSpecialized;
  if (s == "trajectory") return fusion::Situation::TrajectorySpecialized;
  throw InvalidInput("unknown situation '" + s + "'");
}

// ---------------------------------------------------------------------------
// Gains, plant, planner, configuration

inline json to_json(const control::GainSet& g) {
  return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"max_throttle", g.max_throttle},
          {"brake_speed", g.brake_speed}};
}

/// Accepts a preset name or an object. Field-level errors name the field.
inline control::GainSet gains_from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (auto g = control::find_preset(name)) return *g;
    throw InvalidInput("unknown gain preset '" + name + "'");
  }
  only_keys(j, {"kp", "ki", "kd", "max_throttle", "brake_speed"}, "gains");
  control::GainSet g{get<double>(j, "kp"), get<double>(j, "ki"), get<double>(j, "kd"),
                     get<double>(j, "max_throttle"), get<double>(j, "brake_speed")};
  control::validate(g);
  return g;
}

inline json to_json(const plant::PlantParams& p) {
  return {{"dt", p.dt},
          {"accel_gain", p.accel_gain},
          {"brake_gain", p.brake_gain},
          {"drag_coeff", p.drag_coeff},
          {"rolling_resist", p.rolling_resist},
          {"top_speed", p.top_speed},
          {"steer_gain", p.steer_gain},
          {"lane_half_width", p.lane_half_width}};
}

inline plant::PlantParams plant_from_json(const json& j) {
  only_keys(j, {"dt", "accel_gain", "brake_gain", "drag_coeff", "rolling_resist", "top_speed",
                "steer_gain", "lane_half_width"},
            "plant");
  const auto d = plant::default_params();
  plant::PlantParams p;
  p.dt = get_or(j, "dt", d.dt);
  p.accel_gain = get_or(j, "accel_gain", d.accel_gain);
  p.brake_gain = get_or(j, "brake_gain", d.brake_gain);
  p.drag_coeff = get_or(j, "drag_coeff", d.drag_coeff);
  p.rolling_resist = get_or(j, "rolling_resist", d.rolling_resist);
  p.top_speed = get_or(j, "top_speed", d.top_speed);
  p.steer_gain = get_or(j, "steer_gain", d.steer_gain);
  p.lane_half_width = get_or(j, "lane_half_width", d.lane_half_width);
  plant::validate(p);
  return p;
}

inline json to_json(const harness::SimConfig& c) {
  return {{"version", kFormatVersion},
          {"plant", to_json(c.plant)},
          {"gains", to_json(c.gains)},
          {"gains_name", c.gains_name},
          {"alpha", c.alpha},
          {"history", c.history},
          {"pid_window", c.pid_window},
          {"seed", c.seed},
          {"repetitions", c.repetitions},
          {"output_dir", c.output_dir},
          {"tick_cap", c.tick_cap},
          {"workers", c.workers}};
}

/// Missing fields keep their defaults; unknown fields are errors.
inline harness::SimConfig config_from_json(const json& j, harness::SimConfig c = {}) {
  only_keys(j, {"version", "plant", "gains", "gains_name", "alpha", "history", "pid_window", "seed",
                "repetitions", "output_dir", "tick_cap", "workers"},
            "config");
  if (j.contains("version") && get<int>(j, "version") != kFormatVersion) {
    throw InvalidInput("unsupported config version " + j.at("version").dump());
  }
  if (j.contains("plant")) c.plant = plant_from_json(j.at("plant"));
  if (j.contains("gains")) {
    c.gains = gains_from_json(j.at("gains"));
    c.gains_name = j.at("gains").is_string() ? j.at("gains").get<std::string>() : "custom";
  }
  c.gains_name = get_or(j, "gains_name", c.gains_name);
  c.alpha = get_or(j, "alpha", c.alpha);
  c.history = get_or(j, "history", c.history);
  c.pid_window = get_or(j, "pid_window", c.pid_window);
  c.seed = get_or(j, "seed", c.seed);
  c.repetitions = get_or(j, "repetitions", c.repetitions);
  c.output_dir = get_or(j, "output_dir", c.output_dir);
  c.tick_cap = get_or(j, "tick_cap", c.tick_cap);
  c.workers = get_or(j, "workers", c.workers);
  harness::validate(c);
  return c;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline harness::SimConfig load_config(const std::filesystem::path& path, harness::SimConfig base = {}) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

/// The environment variable wins over the configured output directory.
inline void apply_environment(harness::SimConfig& c) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') {
    c.output_dir = dir;
  }
}

// ---------------------------------------------------------------------------
// Scenarios and suites

inline json to_json(const Route& r) {
  json poly = json::array();
  for (const auto& p : r.polyline()) poly.push_back({p.x, p.y});
  json limits = json::array();
  for (const auto& l : r.speed_limits()) limits.push_back({{"start", l.start}, {"limit", l.limit}});
  json zones = json::array();
  for (const auto& z : r.control_zones()) {
    zones.push_back({{"start", z.start},
                     {"end", z.end},
                     {"kind", to_string(z.kind)},
                     {"schedule",
                      {{"period", z.schedule.period},
                       {"green", z.schedule.green},
                       {"offset", z.schedule.offset}}}});
  }
  json biases = json::array();
  for (const auto& b : r.biases()) {
    biases.push_back({{"start", b.start}, {"end", b.end}, {"lateral", b.lateral}});
  }
  return {{"id", r.id()}, {"polyline", poly}, {"speed_limits", limits}, {"control_zones", zones},
          {"biases", biases}};
}

inline Route route_from_json(const json& j) {
  std::vector<Point2> poly;
  for (const auto& p : get<json>(j, "polyline")) {
    if (!p.is_array() || p.size() != 2) throw InvalidInput("polyline points must be [x, y]");
    poly.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  std::vector<SpeedLimitSection> limits;
  for (const auto& l : get<json>(j, "speed_limits")) {
    limits.push_back({get<double>(l, "start"), get<double>(l, "limit")});
  }
  std::vector<ControlZone> zones;
  for (const auto& z : get<json>(j, "control_zones")) {
    const auto& s = get<json>(z, "schedule");
    zones.push_back({get<double>(z, "start"), get<double>(z, "end"),
                     parse_zone_kind(get<std::string>(z, "kind")),
                     {get<double>(s, "period"), get<double>(s, "green"), get<double>(s, "offset")}});
  }
  std::vector<TrajectoryBias> biases;
  for (const auto& b : get<json>(j, "biases")) {
    biases.push_back({get<double>(b, "start"), get<double>(b, "end"), get<double>(b, "lateral")});
  }
  return Route(get<std::string>(j, "id"), std::move(poly), std::move(limits), std::move(zones),
               std::move(biases));
}

inline json to_json(const scenario::ActorScript& a) {
  json motion = json::array();
  for (const auto& m : a.motion) {
    motion.push_back({{"duration", m.duration}, {"v_arc", m.v_arc}, {"v_lateral", m.v_lateral}});
  }
  return {{"kind", scenario::to_string(a.kind)},
          {"label", a.label},
          {"trigger_arc", a.trigger_arc},
          {"start_arc", a.start_arc},
          {"start_lateral", a.start_lateral},
          {"motion", motion},
          {"radius", a.radius}};
}

inline scenario::ActorScript actor_from_json(const json& j) {
  scenario::ActorScript a;
  a.kind = parse_actor_kind(get<std::string>(j, "kind"));
  a.label = get_or<std::string>(j, "label", "");
  a.trigger_arc = get<double>(j, "trigger_arc");
  a.start_arc = get<double>(j, "start_arc");
  a.start_lateral = get<double>(j, "start_lateral");
  for (const auto& m : get<json>(j, "motion")) {
    a.motion.push_back({get<double>(m, "duration"), get<double>(m, "v_arc"),
                        get<double>(m, "v_lateral")});
  }
  a.radius = get<double>(j, "radius");
  return a;
}

inline json to_json(const scenario::Scenario& s) {
  json actors = json::array();
  for (const auto& a : s.actors) actors.push_back(to_json(a));
  return {{"id", s.id},
          {"index", s.index},
          {"route", to_json(s.route)},
          {"weather",
           {{"kind", scenario::to_string(s.weather.kind)},
            {"severity", s.weather.severity},
            {"speed_noise_sigma", s.weather.speed_noise_sigma},
            {"waypoint_jitter_sigma", s.weather.waypoint_jitter_sigma},
            {"detection_delay_ticks", s.weather.detection_delay_ticks}}},
          {"actors", actors},
          {"seed", s.seed},
          {"time_budget", s.time_budget},
          {"ego_radius", s.ego_radius}};
}

inline scenario::Scenario scenario_from_json(const json& j) {
  scenario::Scenario s;
  s.id = get<std::string>(j, "id");
  s.index = get<int>(j, "index");
  s.route = route_from_json(get<json>(j, "route"));
  const auto& w = get<json>(j, "weather");
  s.weather.kind = parse_weather_kind(get<std::string>(w, "kind"));
  s.weather.severity = get<double>(w, "severity");
  s.weather.speed_noise_sigma = get<double>(w, "speed_noise_sigma");
  s.weather.waypoint_jitter_sigma = get<double>(w, "waypoint_jitter_sigma");
  s.weather.detection_delay_ticks = get<int>(w, "detection_delay_ticks");
  for (const auto& a : get<json>(j, "actors")) s.actors.push_back(actor_from_json(a));
  s.seed = get<std::uint64_t>(j, "seed");
  s.time_budget = get<double>(j, "time_budget");
  s.ego_radius = get<double>(j, "ego_radius");
  scenario::validate(s);
  return s;
}

struct SuiteFile {
  std::uint64_t seed = 0;
  std::vector<scenario::Scenario> scenarios;
};

inline std::string suite_to_string(const SuiteFile& suite) {
  json scenarios = json::array();
  for (const auto& s : suite.scenarios) scenarios.push_back(to_json(s));
  const json doc{{"format", "drivetune-suite"},
                 {"version", kFormatVersion},
                 {"seed", suite.seed},
                 {"scenarios", scenarios}};
  return doc.dump(1) + "\n";
}

inline SuiteFile suite_from_string(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("suite file is not valid JSON: ") + e.what());
  }
  if (get<std::string>(doc, "format") != "drivetune-suite") {
    throw InvalidInput("not a drivetune suite file");
  }
  if (get<int>(doc, "version") != kFormatVersion) {
    throw InvalidInput("unsupported suite version " + doc.at("version").dump());
  }
  SuiteFile suite;
  suite.seed = get<std::uint64_t>(doc, "seed");
  for (const auto& s : get<json>(doc, "scenarios")) suite.scenarios.push_back(scenario_from_json(s));
  return suite;
}

// ---------------------------------------------------------------------------
// Results

inline json to_json(const scoring::InfractionEvent& e) {
  return {{"kind", scoring::to_string(e.kind)},
          {"time", e.time},
          {"arc_position", e.arc_position},
          {"detail", e.detail},
          {"off_road_fraction", e.off_road_fraction}};
}

inline scoring::InfractionEvent infraction_from_json(const json& j) {
  return {scoring::parse_infraction(get<std::string>(j, "kind")), get<double>(j, "time"),
          get<double>(j, "arc_position"), get<std::string>(j, "detail"),
          get<double>(j, "off_road_fraction")};
}

inline json to_json(const scoring::RunResult& r) {
  json infractions = json::array();
  for (const auto& e : r.infractions) infractions.push_back(to_json(e));
  json shutdown = nullptr;
  if (r.shutdown) {
    shutdown = {{"kind", scoring::to_string(r.shutdown->kind)},
                {"time", r.shutdown->time},
                {"tick", r.shutdown->tick}};
  }
  return {{"scenario_id", r.scenario_id},
          {"repetition", r.repetition},
          {"completion", r.completion},
          {"infractions", infractions},
          {"shutdown", shutdown},
          {"km_driven", r.km_driven},
          {"penalty", r.penalty},
          {"score", r.score},
          {"ticks", r.ticks},
          {"trace_checksum", r.trace_checksum},
          {"note", r.note}};
}

inline scoring::RunResult run_result_from_json(const json& j) {
  scoring::RunResult r;
  r.scenario_id = get<std::string>(j, "scenario_id");
  r.repetition = get<std::uint64_t>(j, "repetition");
  r.completion = get<double>(j, "completion");
  for (const auto& e : get<json>(j, "infractions")) r.infractions.push_back(infraction_from_json(e));
  if (const auto& s = get<json>(j, "shutdown"); !s.is_null()) {
    r.shutdown = scoring::ShutdownEvent{scoring::parse_shutdown(get<std::string>(s, "kind")),
                                        get<double>(s, "time"), get<std::int64_t>(s, "tick")};
  }
  r.km_driven = get<double>(j, "km_driven");
  r.penalty = get<double>(j, "penalty");
  r.score = get<double>(j, "score");
  r.ticks = get<std::int64_t>(j, "ticks");
  r.trace_checksum = get_or<std::string>(j, "trace_checksum", "");
  r.note = get_or<std::string>(j, "note", "");
  return r;
}

inline json to_json(const scoring::ScoreCard& c) {
  json scenarios = json::array();
  for (const auto& s : c.scenarios) {
    scenarios.push_back({{"scenario_id", s.scenario_id},
                         {"runs", s.runs},
                         {"mean_score", s.mean_score},
                         {"mean_completion", s.mean_completion},
                         {"mean_penalty", s.mean_penalty}});
  }
  return {{"scenarios", scenarios},
          {"global_completion", c.global_completion},
          {"global_infraction", c.global_infraction},
          {"global_driving_score", c.global_driving_score},
          {"total_km", c.total_km},
          {"infractions_per_km", c.infractions_per_km},
          {"run_count", c.run_count}};
}

inline scoring::ScoreCard scorecard_from_json(const json& j) {
  scoring::ScoreCard c;
  for (const auto& s : get<json>(j, "scenarios")) {
    c.scenarios.push_back({get<std::string>(s, "scenario_id"), get<std::size_t>(s, "runs"),
                           get<double>(s, "mean_score"), get<double>(s, "mean_completion"),
                           get<double>(s, "mean_penalty")});
  }
  c.global_completion = get<double>(j, "global_completion");
  c.global_infraction = get<double>(j, "global_infraction");
  c.global_driving_score = get<double>(j, "global_driving_score");
  c.total_km = get<double>(j, "total_km");
  c.infractions_per_km = get<std::map<std::string, double>>(j, "infractions_per_km");
  c.run_count = get<std::size_t>(j, "run_count");
  return c;
}

// ---------------------------------------------------------------------------
// Traces

inline json to_json(const ControlAction& a) { return json::array({a.throttle, a.brake, a.steer}); }

inline ControlAction action_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput("actions must be [throttle, brake, steer]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const TickRecord& r) {
  const auto& s = r.state;
  json waypoints = json::array();
  for (const auto& w : r.waypoints) waypoints.push_back({w.arc, w.lateral, w.x, w.y});
  json actors = json::array();
  for (const auto& a : r.actors) {
    actors.push_back({scenario::to_string(a.kind), a.arc, a.lateral, a.x, a.y, a.v_arc, a.radius});
  }
  return {{"tick", r.tick},
          {"time", r.time},
          {"state",
           {s.time, s.arc_position, s.lateral_offset, s.speed, s.heading_error, s.last_throttle,
            s.last_brake, s.last_steer}},
          {"v_ref", r.v_ref},
          {"measured_speed", r.measured_speed},
          {"waypoints", waypoints},
          {"a_traj", to_json(r.a_traj)},
          {"a_ctl", to_json(r.a_ctl)},
          {"a_fused", to_json(r.a_fused)},
          {"situation", fusion::to_string(r.situation)},
          {"actors", actors},
          {"events", r.events}};
}

inline TickRecord tick_from_json(const json& j) {
  TickRecord r;
  r.tick = get<std::int64_t>(j, "tick");
  r.time = get<double>(j, "time");
  const auto s = get<std::vector<double>>(j, "state");
  if (s.size() != 8) throw InvalidInput("field 'state' must hold 8 numbers");
  r.state = {s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7]};
  r.v_ref = get<double>(j, "v_ref");
  r.measured_speed = get<double>(j, "measured_speed");
  for (const auto& w : get<json>(j, "waypoints")) {
    r.waypoints.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(),
                           w.at(3).get<double>()});
  }
  r.a_traj = action_from_json(get<json>(j, "a_traj"));
  r.a_ctl = action_from_json(get<json>(j, "a_ctl"));
  r.a_fused = action_from_json(get<json>(j, "a_fused"));
  r.situation = parse_situation(get<std::string>(j, "situation"));
  for (const auto& a : get<json>(j, "actors")) {
    r.actors.push_back({parse_actor_kind(a.at(0).get<std::string>()), a.at(1).get<double>(),
                        a.at(2).get<double>(), a.at(3).get<double>(), a.at(4).get<double>(),
                        a.at(5).get<double>(), a.at(6).get<double>()});
  }
  r.events = get<std::vector<std::string>>(j, "events");
  return r;
}

/// One persisted run: the scenario it ran on, the gains, every tick and the
/// recorded result.
struct TraceFile {
  scenario::Scenario scenario;
  control::GainSet gains;
  std::string gains_name;
  RunTrace trace;
  scoring::RunResult result;
};

inline std::string trace_file_name(const std::string& scenario_id, std::uint64_t repetition) {
  return scenario_id + "_r" + std::to_string(repetition) + ".trace.jsonl";
}

/// Writes header, ticks and footer. The checksum covers every byte before the
/// footer line and is also stored into `result.trace_checksum`.
inline void write_trace(std::ostream& out, const scenario::Scenario& scenario,
                        const control::GainSet& gains, const std::string& gains_name,
                        const RunTrace& trace, scoring::RunResult& result) {
  Fnv1a64 hash;
  auto emit = [&](const json& line, bool hashed) {
    const std::string text = line.dump() + "\n";
    if (hashed) hash.update(text);
    out << text;
  };
  emit({{"type", "header"},
        {"format", "drivetune-trace"},
        {"version", kFormatVersion},
        {"scenario_id", trace.scenario_id},
        {"repetition", trace.repetition},
        {"dt", trace.dt},
        {"lane_half_width", trace.lane_half_width},
        {"tick_cap", trace.tick_cap},
        {"gains", to_json(gains)},
        {"gains_name", gains_name},
        {"scenario", to_json(scenario)}},
       true);
  for (const auto& r : trace.records) emit(to_json(r), true);
  result.trace_checksum = hash.hex();
  emit({{"type", "footer"},
        {"ticks", trace.records.size()},
        {"checksum", hash.hex()},
        {"result", to_json(result)}},
       false);
  if (!out) throw std::runtime_error("trace write failed");
}

inline void write_trace(std::ostream& out, TraceFile& file) {
  write_trace(out, file.scenario, file.gains, file.gains_name, file.trace, file.result);
}

/// Writes `<dir>/<scenario>_r<rep>.trace.jsonl` and returns its path.
inline std::filesystem::path save_trace(const std::filesystem::path& dir,
                                        const scenario::Scenario& scenario,
                                        const control::GainSet& gains,
                                        const std::string& gains_name, const RunTrace& trace,
                                        scoring::RunResult& result) {
  std::filesystem::create_directories(dir);
  const auto path = dir / trace_file_name(trace.scenario_id, trace.repetition);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_trace(out, scenario, gains, gains_name, trace, result);
  return path;
}

inline std::string trace_to_string(TraceFile& file) {
  std::ostringstream ss;
  write_trace(ss, file);
  return ss.str();
}

/// Parses and verifies a trace. Any checksum mismatch or structural damage
/// raises CorruptData.
inline TraceFile read_trace(std::istream& in) {
  TraceFile file;
  Fnv1a64 hash;
  std::string line;
  bool have_header = false;
  bool have_footer = false;
  std::string stored_checksum;
  std::size_t stored_ticks = 0;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (have_footer) throw CorruptData("data after the trace footer");
      const json j = json::parse(line);
      if (!have_header) {
        if (get<std::string>(j, "type") != "header" ||
            get<std::string>(j, "format") != "drivetune-trace") {
          throw CorruptData("trace does not start with a drivetune header");
        }
        if (get<int>(j, "version") != kFormatVersion) {
          throw CorruptData("unsupported trace version " + j.at("version").dump());
        }
        file.trace.scenario_id = get<std::string>(j, "scenario_id");
        file.trace.repetition = get<std::uint64_t>(j, "repetition");
        file.trace.dt = get<double>(j, "dt");
        file.trace.lane_half_width = get<double>(j, "lane_half_width");
        file.trace.tick_cap = get<std::int64_t>(j, "tick_cap");
        file.gains = gains_from_json(get<json>(j, "gains"));
        file.gains_name = get<std::string>(j, "gains_name");
        file.scenario = scenario_from_json(get<json>(j, "scenario"));
        have_header = true;
        hash.update(line + "\n");
      } else if (j.contains("type") && j.at("type") == "footer") {
        stored_checksum = get<std::string>(j, "checksum");
        stored_ticks = get<std::size_t>(j, "ticks");
        file.result = run_result_from_json(get<json>(j, "result"));
        have_footer = true;
      } else {
        file.trace.records.push_back(tick_from_json(j));
        hash.update(line + "\n");
      }
    }
  } catch (const json::exception& e) {
    throw CorruptData(std::string("malformed trace line: ") + e.what());
  } catch (const InvalidInput& e) {
    throw CorruptData(std::string("malformed trace: ") + e.what());
  }
  if (!have_header) throw CorruptData("empty trace");
  if (!have_footer) throw CorruptData("trace has no footer (truncated file?)");
  if (stored_ticks != file.trace.records.size()) {
    throw CorruptData("footer tick count does not match the trace body");
  }
  if (hash.hex() != stored_checksum || file.result.trace_checksum != stored_checksum) {
    throw CorruptData("trace checksum mismatch: stored " + stored_checksum + ", computed " +
                      hash.hex());
  }
  return file;
}

inline TraceFile trace_from_string(const std::string& text) {
  std::istringstream ss(text);
  return read_trace(ss);
}

struct ReplayOutcome {
  scoring::RunResult recorded;
  scoring::RunResult rescored;
  bool matches = false;
};

/// Re-scores a verified trace from its own records.
inline ReplayOutcome replay(const TraceFile& file) {
  ReplayOutcome out;
  out.recorded = file.result;
  out.rescored = scoring::score_trace(file.trace, file.scenario);
  out.rescored.trace_checksum = file.result.trace_checksum;
  out.rescored.note = file.result.note;
  out.matches = out.rescored == out.recorded;
  return out;
}

// ---------------------------------------------------------------------------
// Scorecards

struct ScoreCardFile {
  std::uint64_t seed = 0;
  std::string gains_name;
  control::GainSet gains;
  std::vector<scoring::RunResult> runs;
  scoring::ScoreCard card;
};

/// One line per run (aggregation order), then one summary line.
inline std::string scorecard_to_jsonl(const ScoreCardFile& f) {
  auto runs = f.runs;
  std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    if (a.scenario_id != b.scenario_id) return scoring::scenario_id_less(a.scenario_id, b.scenario_id);
    return a.repetition < b.repetition;
  });
  std::string out;
  for (const auto& r : runs) {
    json line = to_json(r);
    line["type"] = "run";
    out += line.dump() + "\n";
  }
  json summary = to_json(f.card);
  summary["type"] = "summary";
  summary["format"] = "drivetune-scorecard";
  summary["version"] = kFormatVersion;
  summary["seed"] = f.seed;
  summary["gains"] = to_json(f.gains);
  summary["gains_name"] = f.gains_name;
  out += summary.dump() + "\n";
  return out;
}

inline ScoreCardFile scorecard_from_jsonl(const std::string& text) {
  ScoreCardFile f;
  std::istringstream ss(text);
  std::string line;
  bool have_summary = false;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InvalidInput(std::string("malformed scorecard line: ") + e.what());
    }
    const auto type = get<std::string>(j, "type");
    if (type == "run") {
      f.runs.push_back(run_result_from_json(j));
    } else if (type == "summary") {
      if (get<int>(j, "version") != kFormatVersion) throw InvalidInput("unsupported scorecard version");
      f.card = scorecard_from_json(j);
      f.seed = get<std::uint64_t>(j, "seed");
      f.gains = gains_from_json(get<json>(j, "gains"));
      f.gains_name = get<std::string>(j, "gains_name");
      have_summary = true;
    } else {
      throw InvalidInput("unknown scorecard line type '" + type + "'");
    }
  }
  if (!have_summary) throw InvalidInput("scorecard has no summary line");
  return f;
}

inline std::string fixed(double v, int digits = 2) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

inline std::string scorecard_table(const ScoreCardFile& f) {
  std::ostringstream ss;
  ss << "gains " << f.gains_name << " (kp=" << f.gains.kp << " ki=" << f.gains.ki
     << " kd=" << f.gains.kd << " max_throttle=" << f.gains.max_throttle
     << " brake_speed=" << f.gains.brake_speed << "), seed " << f.seed << "\n";
  ss << std::left << std::setw(9) << "scenario" << std::right << std::setw(6) << "runs"
     << std::setw(12) << "completion" << std::setw(10) << "penalty" << std::setw(10) << "score"
     << "\n";
  for (const auto& s : f.card.scenarios) {
    ss << std::left << std::setw(9) << s.scenario_id << std::right << std::setw(6) << s.runs
       << std::setw(12) << fixed(s.mean_completion) << std::setw(10) << fixed(s.mean_penalty, 3)
       << std::setw(10) << fixed(s.mean_score) << "\n";
  }
  ss << "global completion " << fixed(f.card.global_completion) << ", infraction "
     << fixed(f.card.global_infraction, 4) << ", driving score "
     << fixed(f.card.global_driving_score) << "\n";
  ss << "driven " << fixed(f.card.total_km, 3) << " km; per km:";
  for (const auto& [kind, rate] : f.card.infractions_per_km) ss << " " << kind << "=" << fixed(rate, 3);
  ss << "\n";
  return ss.str();
}

/// Per-scenario series for a line chart: one row per scenario.
inline std::string chart_csv(const scoring::ScoreCard& card) {
  std::string out = "scenario,mean_score,mean_completion,mean_penalty\n";
  for (const auto& s : card.scenarios) {
    out += s.scenario_id + "," + fixed(s.mean_score, 6) + "," + fixed(s.mean_completion, 6) + "," +
           fixed(s.mean_penalty, 6) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonRow {
  std::string scenario_id;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

struct Comparison {
  std::string name_a;
  std::string name_b;
  std::uint64_t seed = 0;
  std::vector<ComparisonRow> rows;
  double global_a = 0.0;
  double global_b = 0.0;
};

/// Pairs per-scenario mean scores. Both cards must cover the same scenarios
/// of the same suite.
inline Comparison compare(const ScoreCardFile& a, const ScoreCardFile& b) {
  require(a.seed == b.seed, "cannot compare scorecards from different suite seeds (" +
                                std::to_string(a.seed) + " vs " + std::to_string(b.seed) + ")");
  require(a.card.scenarios.size() == b.card.scenarios.size(),
          "scorecards cover different scenario sets");
  Comparison c;
  c.name_a = a.gains_name;
  c.name_b = b.gains_name;
  c.seed = a.seed;
  for (std::size_t i = 0; i < a.card.scenarios.size(); ++i) {
    const auto& sa = a.card.scenarios[i];
    const auto& sb = b.card.scenarios[i];
    require(sa.scenario_id == sb.scenario_id, "scorecards cover different scenario sets");
    c.rows.push_back({sa.scenario_id, sa.mean_score, sb.mean_score, sb.mean_score - sa.mean_score});
  }
  c.global_a = a.card.global_driving_score;
  c.global_b = b.card.global_driving_score;
  return c;
}

inline std::string comparison_table(const Comparison& c) {
  std::ostringstream ss;
  ss << "seed " << c.seed << "\n";
  ss << std::left << std::setw(9) << "scenario" << std::right << std::setw(14) << c.name_a
     << std::setw(14) << c.name_b << std::setw(10) << "delta" << "\n";
  for (const auto& r : c.rows) {
    ss << std::left << std::setw(9) << r.scenario_id << std::right << std::setw(14) << fixed(r.a)
       << std::setw(14) << fixed(r.b) << std::setw(10) << fixed(r.delta) << "\n";
  }
  ss << std::left << std::setw(9) << "global" << std::right << std::setw(14) << fixed(c.global_a)
     << std::setw(14) << fixed(c.global_b) << std::setw(10) << fixed(c.global_b - c.global_a)
     << "\n";
  return ss.str();
}

inline std::string comparison_csv(const Comparison& c) {
  std::string out = "scenario," + c.name_a + "," + c.name_b + ",delta\n";
  for (const auto& r : c.rows) {
    out += r.scenario_id + "," + fixed(r.a, 6) + "," + fixed(r.b, 6) + "," + fixed(r.delta, 6) + "\n";
  }
  return out;
}

inline json to_json(const Comparison& c) {
  json rows = json::array();
  for (const auto& r : c.rows) {
    rows.push_back({{"scenario_id", r.scenario_id}, {"a", r.a}, {"b", r.b}, {"delta", r.delta}});
  }
  return {{"name_a", c.name_a}, {"name_b", c.name_b}, {"seed", c.seed},
          {"rows", rows},       {"global_a", c.global_a}, {"global_b", c.global_b}};
}

// ---------------------------------------------------------------------------
// Tuner reports

inline json to_json(const tuner::Axis& a) { return {{"lo", a.lo}, {"hi", a.hi}, {"step", a.step}}; }

inline tuner::Axis axis_from_json(const json& j) {
  return {get<double>(j, "lo"), get<double>(j, "hi"), get<double>(j, "step")};
}

inline json to_json(const tuner::SearchSpace& s) {
  return {{"kp", to_json(s.kp)},
          {"ki", to_json(s.ki)},
          {"kd", to_json(s.kd)},
          {"max_throttle", to_json(s.max_throttle)},
          {"brake_speed", to_json(s.brake_speed)}};
}

inline tuner::SearchSpace space_from_json(const json& j) {
  only_keys(j, {"kp", "ki", "kd", "max_throttle", "brake_speed"}, "search space");
  tuner::SearchSpace s;
  if (j.contains("kp")) s.kp = axis_from_json(j.at("kp"));
  if (j.contains("ki")) s.ki = axis_from_json(j.at("ki"));
  if (j.contains("kd")) s.kd = axis_from_json(j.at("kd"));
  if (j.contains("max_throttle")) s.max_throttle = axis_from_json(j.at("max_throttle"));
  if (j.contains("brake_speed")) s.brake_speed = axis_from_json(j.at("brake_speed"));
  tuner::validate(s);
  return s;
}

inline json to_json(const tuner::Evaluation& e) {
  return {{"gains", to_json(e.gains)}, {"score", e.score}, {"seed", e.seed}};
}

inline std::string evaluation_line(const tuner::Evaluation& e, std::size_t index) {
  json j = to_json(e);
  j["type"] = "evaluation";
  j["index"] = index;
  return j.dump() + "\n";
}

inline std::string summary_line(const tuner::TuneReport& r) {
  json accepted = json::array();
  for (const auto& e : r.accepted) accepted.push_back(to_json(e));
  const json j{{"type", "summary"},
               {"format", "drivetune-tune-log"},
               {"version", kFormatVersion},
               {"method", r.method},
               {"best", to_json(r.best)},
               {"best_score", r.best_score},
               {"iterations", r.iterations},
               {"evaluations", r.log.size()},
               {"accepted", accepted},
               {"wall_time", r.wall_time}};
  return j.dump() + "\n";
}

inline std::string tune_log(const tuner::TuneReport& r) {
  std::string out;
  for (std::size_t i = 0; i < r.log.size(); ++i) out += evaluation_line(r.log[i], i);
  return out + summary_line(r);
}

/// Scores recorded in a (possibly interrupted) log for suite `seed`. A torn
/// final line is ignored; evaluations from other seeds are skipped.
inline std::map<control::GainSet, double> known_scores(const std::string& log_text,
                                                       std::uint64_t seed) {
  std::map<control::GainSet, double> known;
  std::istringstream ss(log_text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      if (ss.peek() == std::char_traits<char>::eof()) break;
      throw InvalidInput("tuner log has a malformed line before its end");
    }
    if (get<std::string>(j, "type") != "evaluation") continue;
    if (get<std::uint64_t>(j, "seed") != seed) continue;
    known[gains_from_json(get<json>(j, "gains"))] = get<double>(j, "score");
  }
  return known;
}

}  // namespace drivetune::io
