#pragma once

// Local service for the tuning dashboard: interactive sessions that run one
// scenario with live telemetry, gain changes that restart the run, suite
// scorecards and A/B comparison. JSON over HTTP, versioned by api_version.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "drivetune/control.hpp"
#include "drivetune/io.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/scoring.hpp"
#include "drivetune/simulation.hpp"
#include "drivetune/tuner.hpp"

namespace drivetune::service {

using json = nlohmann::json;

inline constexpr int kApiVersion = 1;

/// Seconds on an arbitrary monotone scale. Tests inject a fake.
using Clock = std::function<double()>;

inline Clock steady_clock() {
  return [] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };
}

struct ServiceOptions {
  harness::SimConfig config;
  std::size_t max_sessions = 4;
  double heartbeat_timeout = scoring::kHeartbeatTimeout;  // s
  int telemetry_decimation = 2;                           // 20 Hz -> 10 Hz
  std::size_t telemetry_buffer = 20000;                   // frames kept per session
  double speed = 1.0;  // simulated seconds per wall second; 0 runs unpaced
};

/// Error carried back to the client as a JSON body with an HTTP status.
struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message, json fields = json::object())
      : std::runtime_error(message), status(status), code(std::move(code)), fields(std::move(fields)) {}
  int status;
  std::string code;
  json fields;
};

/// Parses a gain payload (preset name or object), collecting every bad field.
inline control::GainSet parse_gains(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (auto g = control::find_preset(name)) return *g;
    throw ApiError(400, "unknown_preset", "unknown gain preset '" + name + "'");
  }
  if (!j.is_object()) {
    throw ApiError(400, "invalid_gains", "gains must be a preset name or an object");
  }
  json fields = json::object();
  control::GainSet g;
  auto read = [&](const char* key, double& slot) {
    if (!j.contains(key)) {
      fields[key] = "is required";
    } else if (!j.at(key).is_number()) {
      fields[key] = "must be a number";
    } else {
      slot = j.at(key).get<double>();
    }
  };
  read("kp", g.kp);
  read("ki", g.ki);
  read("kd", g.kd);
  read("max_throttle", g.max_throttle);
  read("brake_speed", g.brake_speed);
  for (const auto& [key, _] : j.items()) {
    if (key != "kp" && key != "ki" && key != "kd" && key != "max_throttle" && key != "brake_speed") {
      fields[key] = "is not a gain field";
    }
  }
  for (const auto& [field, message] : control::gain_errors(g)) {
    if (!fields.contains(field)) fields[field] = message;
  }
  if (!fields.empty()) throw ApiError(400, "invalid_gains", "gain payload rejected", fields);
  return g;
}

// ---------------------------------------------------------------------------
// Sessions

/// One decimated telemetry sample. `seq` is monotone across restarts.
struct Frame {
  std::uint64_t seq = 0;
  int run = 0;
  std::int64_t tick = 0;
  double time = 0.0;
  double speed = 0.0;
  double v_ref = 0.0;
  double measured_speed = 0.0;
  double throttle = 0.0;
  double brake = 0.0;
  double steer = 0.0;
  double arc = 0.0;
  double lateral = 0.0;
  fusion::Situation situation = fusion::Situation::TrajectorySpecialized;
  std::vector<std::string> events;

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline json to_json(const Frame& f) {
  return {{"seq", f.seq},
          {"run", f.run},
          {"tick", f.tick},
          {"time", f.time},
          {"speed", f.speed},
          {"v_ref", f.v_ref},
          {"measured_speed", f.measured_speed},
          {"throttle", f.throttle},
          {"brake", f.brake},
          {"steer", f.steer},
          {"arc", f.arc},
          {"lateral", f.lateral},
          {"situation", fusion::to_string(f.situation)},
          {"events", f.events}};
}

enum class SessionStatus { Running, Finished, Closed };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "running";
    case SessionStatus::Finished: return "finished";
    case SessionStatus::Closed: return "closed";
  }
  return "?";
}

/// Command accepted by a session, in arrival order. Replaying the log on a
/// fresh manager reproduces each completed run's telemetry.
struct Command {
  std::string kind;  // "start" or "gains"
  std::string scenario_id;
  control::GainSet gains;
};

struct SessionSnapshot {
  std::string id;
  std::string scenario_id;
  control::GainSet gains;
  int run = 0;
  SessionStatus status = SessionStatus::Running;
  std::string close_reason;
  std::optional<scoring::RunResult> result;
  std::uint64_t next_seq = 0;
  std::vector<Command> commands;
};

inline json to_json(const SessionSnapshot& s) {
  json commands = json::array();
  for (const auto& c : s.commands) {
    json entry{{"kind", c.kind}, {"gains", io::to_json(c.gains)}};
    if (!c.scenario_id.empty()) entry["scenario"] = c.scenario_id;
    commands.push_back(entry);
  }
  return {{"id", s.id},
          {"scenario", s.scenario_id},
          {"gains", io::to_json(s.gains)},
          {"run", s.run},
          {"status", to_string(s.status)},
          {"close_reason", s.close_reason.empty() ? json(nullptr) : json(s.close_reason)},
          {"result", s.result ? io::to_json(*s.result) : json(nullptr)},
          {"next_seq", s.next_seq},
          {"commands", commands}};
}

struct TelemetryPage {
  std::vector<Frame> frames;
  std::uint64_t next = 0;  // pass back as `since`
  int run = 0;
  SessionStatus status = SessionStatus::Running;
};

class SessionManager {
public:
  explicit SessionManager(ServiceOptions options, Clock clock = steady_clock())
      : options_(std::move(options)), clock_(std::move(clock)) {
    harness::validate(options_.config);
    require(options_.max_sessions > 0, "field 'max_sessions' must be > 0");
    require(options_.telemetry_decimation > 0, "field 'telemetry_decimation' must be > 0");
    require(options_.speed >= 0.0, "field 'speed' must be >= 0");
    suite_ = scenario::build_suite(options_.config.seed);
  }

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  ~SessionManager() {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(mutex_);
      for (auto& [_, s] : sessions_) all.push_back(s);
      sessions_.clear();
    }
    for (auto& s : all) stop_worker(*s);
  }

  const ServiceOptions& options() const { return options_; }
  const std::vector<scenario::Scenario>& suite() const { return suite_; }

  const scenario::Scenario& find_scenario(const std::string& id) const {
    for (const auto& s : suite_) {
      if (s.id == id) return s;
    }
    throw ApiError(404, "unknown_scenario", "no scenario '" + id + "' in the suite");
  }

  std::string start(const std::string& scenario_id, const control::GainSet& gains) {
    const auto& sc = find_scenario(scenario_id);
    control::validate(gains);
    sweep();
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mutex_);
      std::size_t open = 0;
      for (const auto& [_, other] : sessions_) {
        std::lock_guard inner(other->mutex);
        if (other->status != SessionStatus::Closed) ++open;
      }
      if (open >= options_.max_sessions) {
        throw ApiError(429, "session_cap",
                       "session cap of " + std::to_string(options_.max_sessions) +
                           " reached; close a session first");
      }
      s = std::make_shared<Session>();
      s->id = "s" + std::to_string(++next_id_);
      s->scenario = &sc;
      s->gains = gains;
      s->last_heartbeat = clock_();
      s->commands.push_back({"start", scenario_id, gains});
      sessions_[s->id] = s;
    }
    launch(s);
    return s->id;
  }

  /// Restarts the session's scenario with `gains` at the next tick boundary.
  void set_gains(const std::string& id, const control::GainSet& gains) {
    control::validate(gains);
    auto s = get(id);
    {
      std::lock_guard lock(s->mutex);
      if (s->status == SessionStatus::Closed) {
        throw ApiError(409, "session_closed", "session '" + id + "' is closed");
      }
      s->last_heartbeat = clock_();
    }
    stop_worker(*s);
    {
      std::lock_guard lock(s->mutex);
      s->gains = gains;
      s->commands.push_back({"gains", "", gains});
    }
    launch(s);
  }

  void heartbeat(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    if (s->status == SessionStatus::Closed) {
      throw ApiError(409, "session_closed", "session '" + id + "' is closed");
    }
    s->last_heartbeat = clock_();
  }

  TelemetryPage telemetry(const std::string& id, std::uint64_t since, std::size_t limit = 1000) {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    if (s->status != SessionStatus::Closed) s->last_heartbeat = clock_();
    TelemetryPage page;
    page.run = s->run;
    page.status = s->status;
    for (const auto& f : s->frames) {
      if (f.seq < since) continue;
      if (page.frames.size() >= limit) break;
      page.frames.push_back(f);
    }
    page.next = page.frames.empty() ? std::max(since, s->first_seq()) : page.frames.back().seq + 1;
    return page;
  }

  SessionSnapshot snapshot(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mutex);
    return snapshot_locked(*s);
  }

  std::vector<SessionSnapshot> list() {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(mutex_);
      for (auto& [_, s] : sessions_) all.push_back(s);
    }
    std::vector<SessionSnapshot> out;
    for (auto& s : all) {
      std::lock_guard lock(s->mutex);
      out.push_back(snapshot_locked(*s));
    }
    return out;
  }

  void close(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mutex_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw ApiError(404, "unknown_session", "no session '" + id + "'");
      s = it->second;
      sessions_.erase(it);
    }
    stop_worker(*s);
  }

  /// Closes every session whose client has been silent longer than the
  /// heartbeat timeout. Returns the ids closed.
  std::vector<std::string> sweep() {
    const double now = clock_();
    std::vector<std::shared_ptr<Session>> stale;
    {
      std::lock_guard lock(mutex_);
      for (auto& [_, s] : sessions_) {
        std::lock_guard inner(s->mutex);
        if (s->status != SessionStatus::Closed &&
            now - s->last_heartbeat > options_.heartbeat_timeout) {
          stale.push_back(s);
        }
      }
    }
    std::vector<std::string> closed;
    for (auto& s : stale) {
      stop_worker(*s);
      std::lock_guard lock(s->mutex);
      s->status = SessionStatus::Closed;
      s->close_reason = scoring::to_string(scoring::ShutdownKind::SimulationTimeout);
      if (s->result && !s->result->shutdown) {
        s->result->shutdown = scoring::ShutdownEvent{scoring::ShutdownKind::SimulationTimeout,
                                                     s->last_time, s->last_tick};
      }
      closed.push_back(s->id);
    }
    return closed;
  }

  /// Blocks until the session's current run finishes or `timeout` wall
  /// seconds pass. Returns whether it finished.
  bool wait(const std::string& id, double timeout = 60.0) {
    auto s = get(id);
    std::unique_lock lock(s->mutex);
    return s->changed.wait_for(lock, std::chrono::duration<double>(timeout),
                               [&] { return s->status != SessionStatus::Running; });
  }

  /// Suite scorecard for `gains` on the suite of `seed`; cached.
  io::ScoreCardFile scorecard(const control::GainSet& gains, const std::string& name,
                              std::uint64_t seed) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = scorecards_.find({gains, seed}); it != scorecards_.end()) {
        auto f = it->second;
        f.gains_name = name;
        return f;
      }
    }
    auto config = options_.config;
    config.seed = seed;
    const auto suite = seed == options_.config.seed ? suite_ : scenario::build_suite(seed);
    auto out = harness::run_suite(suite, gains, config);
    io::ScoreCardFile f;
    f.seed = seed;
    f.gains = gains;
    f.gains_name = name;
    f.card = scoring::aggregate(out.runs);
    f.runs = std::move(out.runs);
    std::lock_guard lock(mutex_);
    scorecards_[{gains, seed}] = f;
    return f;
  }

private:
  struct Session {
    std::mutex mutex;
    std::condition_variable changed;
    std::string id;
    const scenario::Scenario* scenario = nullptr;
    control::GainSet gains;
    int run = 0;
    SessionStatus status = SessionStatus::Running;
    std::string close_reason;
    std::optional<scoring::RunResult> result;
    std::deque<Frame> frames;
    std::uint64_t next_seq = 0;
    double last_heartbeat = 0.0;
    double last_time = 0.0;
    std::int64_t last_tick = 0;
    std::vector<Command> commands;
    std::thread worker;
    std::shared_ptr<std::atomic<bool>> cancel;

    std::uint64_t first_seq() const { return frames.empty() ? next_seq : frames.front().seq; }
  };

  std::shared_ptr<Session> get(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown_session", "no session '" + id + "'");
    return it->second;
  }

  static SessionSnapshot snapshot_locked(const Session& s) {
    return {s.id,           s.scenario->id, s.gains,      s.run,     s.status,
            s.close_reason, s.result,       s.next_seq,   s.commands};
  }

  void stop_worker(Session& s) {
    std::thread t;
    {
      std::lock_guard lock(s.mutex);
      if (s.cancel) s.cancel->store(true);
      t = std::move(s.worker);
    }
    if (t.joinable()) t.join();
  }

  void launch(const std::shared_ptr<Session>& s) {
    std::lock_guard lock(s->mutex);
    ++s->run;
    s->status = SessionStatus::Running;
    s->result.reset();
    s->cancel = std::make_shared<std::atomic<bool>>(false);
    s->worker = std::thread(&SessionManager::run_worker, this, s, s->run, s->gains, s->cancel);
  }

  void run_worker(std::shared_ptr<Session> s, int run, control::GainSet gains,
                  std::shared_ptr<std::atomic<bool>> cancel) {
    const auto wall0 = std::chrono::steady_clock::now();
    const double dt = options_.config.plant.dt;
    auto observer = [&](const TickRecord& r) {
      if (cancel->load()) return false;
      {
        std::lock_guard lock(s->mutex);
        s->last_time = r.time;
        s->last_tick = r.tick;
        if (r.tick % options_.telemetry_decimation == 0 || !r.events.empty()) {
          Frame f{s->next_seq++,       run,          r.tick,           r.time,
                  r.state.speed,       r.v_ref,      r.measured_speed, r.a_fused.throttle,
                  r.a_fused.brake,     r.a_fused.steer, r.state.arc_position,
                  r.state.lateral_offset, r.situation, r.events};
          s->frames.push_back(std::move(f));
          while (s->frames.size() > options_.telemetry_buffer) s->frames.pop_front();
        }
      }
      if (options_.speed > 0.0) {
        const auto due = wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double>(static_cast<double>(r.tick + 1) *
                                                                   dt / options_.speed));
        // Sleep in short slices so a restart or close is seen within a tick.
        while (!cancel->load() && std::chrono::steady_clock::now() < due) {
          std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
              due - std::chrono::steady_clock::now(), std::chrono::milliseconds(5)));
        }
      }
      return !cancel->load();
    };

    harness::RunOutput out;
    std::string failure;
    try {
      out = harness::simulate_run(*s->scenario, gains, options_.config, 0, observer);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    std::lock_guard lock(s->mutex);
    if (s->run != run) return;
    s->result = failure.empty() ? out.result : harness::failed_run(s->scenario->id, 0, failure);
    if (!out.cancelled && s->status == SessionStatus::Running) s->status = SessionStatus::Finished;
    s->changed.notify_all();
  }

  ServiceOptions options_;
  Clock clock_;
  std::vector<scenario::Scenario> suite_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::pair<control::GainSet, std::uint64_t>, io::ScoreCardFile> scorecards_;
  std::uint64_t next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Routing

struct Response {
  int status = 200;
  json body;
};

inline json error_body(const std::string& code, const std::string& message,
                       const json& fields = json::object()) {
  json e{{"code", code}, {"message", message}};
  if (!fields.empty()) e["fields"] = fields;
  return {{"api_version", kApiVersion}, {"error", e}};
}

/// Transport-free request handling, so the API is testable without sockets.
class ApiRouter {
public:
  explicit ApiRouter(SessionManager& manager) : manager_(manager) {}

  Response handle(const std::string& method, const std::string& path,
                  const std::map<std::string, std::string>& query, const std::string& body) {
    try {
      Response r = dispatch(method, path, query, body);
      r.body["api_version"] = kApiVersion;
      return r;
    } catch (const ApiError& e) {
      return {e.status, error_body(e.code, e.what(), e.fields)};
    } catch (const InvalidInput& e) {
      return {400, error_body("invalid_request", e.what())};
    } catch (const json::exception& e) {
      return {400, error_body("invalid_json", e.what())};
    } catch (const std::exception& e) {
      return {500, error_body("internal", e.what())};
    }
  }

private:
  static json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    json j = json::parse(body);
    if (!j.is_object()) throw ApiError(400, "invalid_request", "request body must be an object");
    return j;
  }

  static std::uint64_t query_u64(const std::map<std::string, std::string>& q, const char* key,
                                 std::uint64_t fallback) {
    auto it = q.find(key);
    if (it == q.end()) return fallback;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ApiError(400, "invalid_request",
                     std::string("query parameter '") + key + "' must be a non-negative integer");
    }
  }

  std::pair<control::GainSet, std::string> gains_of(const json& body, const char* key) {
    if (!body.contains(key)) throw ApiError(400, "invalid_request", std::string("missing '") + key + "'");
    const auto& g = body.at(key);
    return {parse_gains(g), g.is_string() ? g.get<std::string>() : "custom"};
  }

  static std::uint64_t seed_of(const json& body, std::uint64_t fallback) {
    if (!body.contains("seed")) return fallback;
    const auto& v = body.at("seed");
    if (!v.is_number_unsigned()) {
      throw ApiError(400, "invalid_request", "field 'seed' must be a non-negative integer",
                     {{"seed", "must be a non-negative integer"}});
    }
    return v.get<std::uint64_t>();
  }

  json scorecard_json(const io::ScoreCardFile& f) {
    json runs = json::array();
    for (const auto& r : f.runs) runs.push_back(io::to_json(r));
    return {{"seed", f.seed},
            {"gains", io::to_json(f.gains)},
            {"gains_name", f.gains_name},
            {"scorecard", io::to_json(f.card)},
            {"runs", runs}};
  }

  Response dispatch(const std::string& method, const std::string& path,
                    const std::map<std::string, std::string>& query, const std::string& body) {
    static const std::regex session_re(R"(^/api/v1/sessions/([A-Za-z0-9_-]+)(/[a-z]+)?$)");
    const auto& opts = manager_.options();

    if (path == "/api/v1/presets" && method == "GET") {
      json presets = json::array();
      for (const auto& p : control::presets()) {
        presets.push_back({{"name", p.name}, {"gains", io::to_json(p.gains)}});
      }
      return {200, {{"presets", presets}, {"search_space", io::to_json(tuner::SearchSpace{})}}};
    }
    if (path == "/api/v1/scenarios" && method == "GET") {
      json list = json::array();
      for (const auto& s : manager_.suite()) {
        json actors = json::array();
        for (const auto& a : s.actors) actors.push_back({{"kind", scenario::to_string(a.kind)}, {"label", a.label}});
        list.push_back({{"id", s.id},
                        {"route", s.route.id()},
                        {"route_length", s.route.length()},
                        {"weather", scenario::to_string(s.weather.kind)},
                        {"severity", s.weather.severity},
                        {"time_budget", s.time_budget},
                        {"actors", actors}});
      }
      return {200, {{"seed", opts.config.seed}, {"scenarios", list}}};
    }
    if (path == "/api/v1/sessions" && method == "GET") {
      json list = json::array();
      for (const auto& s : manager_.list()) list.push_back(to_json(s));
      return {200, {{"sessions", list}}};
    }
    if (path == "/api/v1/sessions" && method == "POST") {
      const json b = parse_body(body);
      json fields = json::object();
      if (!b.contains("scenario")) {
        fields["scenario"] = "is required";
      } else if (!b.at("scenario").is_string()) {
        fields["scenario"] = "must be a scenario id string";
      }
      control::GainSet gains = opts.config.gains;
      if (b.contains("gains")) {
        try {
          gains = parse_gains(b.at("gains"));
        } catch (const ApiError& e) {
          for (const auto& [k, v] : e.fields.items()) fields["gains." + k] = v;
          if (e.fields.empty()) fields["gains"] = e.what();
        }
      }
      if (!fields.empty()) throw ApiError(400, "invalid_request", "session payload rejected", fields);
      const auto id = manager_.start(b.at("scenario").get<std::string>(), gains);
      return {201, {{"session", to_json(manager_.snapshot(id))}}};
    }
    if (path == "/api/v1/scorecards" && method == "POST") {
      const json b = parse_body(body);
      const auto [gains, name] = gains_of(b, "gains");
      const auto seed = seed_of(b, opts.config.seed);
      return {200, scorecard_json(manager_.scorecard(gains, name, seed))};
    }
    if (path == "/api/v1/compare" && method == "POST") {
      const json b = parse_body(body);
      auto side = [&](const char* key) {
        if (!b.contains(key) || !b.at(key).is_object()) {
          throw ApiError(400, "invalid_request", std::string("field '") + key + "' must be an object");
        }
        const auto& s = b.at(key);
        const auto [gains, name] = gains_of(s, "gains");
        const auto seed = seed_of(s, opts.config.seed);
        return std::make_tuple(gains, name, seed);
      };
      const auto [ga, na, sa] = side("a");
      const auto [gb, nb, sb] = side("b");
      if (sa != sb) {
        throw ApiError(409, "seed_mismatch",
                       "cannot compare scorecards from different suite seeds (" + std::to_string(sa) +
                           " vs " + std::to_string(sb) + ")");
      }
      const auto a = manager_.scorecard(ga, na, sa);
      const auto b2 = manager_.scorecard(gb, nb, sb);
      return {200, {{"comparison", io::to_json(io::compare(a, b2))}}};
    }

    std::smatch m;
    if (std::regex_match(path, m, session_re)) {
      const std::string id = m[1];
      const std::string action = m[2];
      if (action.empty() && method == "GET") return {200, {{"session", to_json(manager_.snapshot(id))}}};
      if (action.empty() && method == "DELETE") {
        manager_.close(id);
        return {200, {{"closed", id}}};
      }
      if (action == "/heartbeat" && method == "POST") {
        manager_.sweep();
        manager_.heartbeat(id);
        return {200, {{"session", id}, {"timeout", opts.heartbeat_timeout}}};
      }
      if (action == "/gains" && method == "POST") {
        const json b = parse_body(body);
        const json& payload = b.contains("gains") ? b.at("gains") : b;
        manager_.set_gains(id, parse_gains(payload));
        return {200, {{"session", to_json(manager_.snapshot(id))}}};
      }
      if (action == "/telemetry" && method == "GET") {
        manager_.sweep();
        const auto since = query_u64(query, "since", 0);
        const auto limit = query_u64(query, "limit", 1000);
        const auto page = manager_.telemetry(id, since, static_cast<std::size_t>(limit));
        json frames = json::array();
        for (const auto& f : page.frames) frames.push_back(to_json(f));
        return {200, {{"session", id},
                      {"run", page.run},
                      {"status", to_string(page.status)},
                      {"next", page.next},
                      {"frames", frames}}};
      }
    }
    throw ApiError(404, "not_found", method + " " + path + " is not an endpoint");
  }

  SessionManager& manager_;
};

// ---------------------------------------------------------------------------
// HTTP transport

class HttpService {
public:
  explicit HttpService(SessionManager& manager) : manager_(manager), router_(manager) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      std::map<std::string, std::string> query;
      for (const auto& [k, v] : req.params) query[k] = v;
      const auto r = router_.handle(req.method, req.path, query, req.body);
      res.status = r.status;
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_content(r.body.dump(), "application/json");
    };
    const std::string any = R"(/api/v1/.*)";
    server_.Get(any, forward);
    server_.Post(any, forward);
    server_.Delete(any, forward);
    server_.Options(any, [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  ~HttpService() { stop(); }

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    running_ = true;
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    reaper_ = std::thread([this] {
      std::unique_lock lock(reaper_mutex_);
      while (running_) {
        reaper_cv_.wait_for(lock, std::chrono::seconds(1));
        if (running_) manager_.sweep();
      }
    });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    {
      std::lock_guard lock(reaper_mutex_);
      running_ = false;
    }
    reaper_cv_.notify_all();
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (reaper_.joinable()) reaper_.join();
  }

private:
  SessionManager& manager_;
  ApiRouter router_;
  httplib::Server server_;
  std::thread listener_;
  std::thread reaper_;
  std::mutex reaper_mutex_;
  std::condition_variable reaper_cv_;
  bool running_ = false;
};

}  // namespace drivetune::service
