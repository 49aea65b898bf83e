#include <gtest/gtest.h>

#include <atomic>
#include <memory>

#include <httplib.h>

#include "drivetune/service.hpp"

using namespace drivetune;
using service::ApiRouter;
using service::ServiceOptions;
using service::SessionManager;
using service::SessionStatus;

namespace {

struct FakeClock {
  std::shared_ptr<std::atomic<double>> now = std::make_shared<std::atomic<double>>(1000.0);
  service::Clock clock() const {
    auto n = now;
    return [n] { return n->load(); };
  }
  void advance(double s) { now->store(now->load() + s); }
};

ServiceOptions unpaced(std::size_t max_sessions = 4) {
  ServiceOptions o;
  o.speed = 0.0;
  o.max_sessions = max_sessions;
  return o;
}

std::vector<service::Frame> all_frames(SessionManager& m, const std::string& id) {
  return m.telemetry(id, 0, 1'000'000).frames;
}

service::Response call(ApiRouter& r, const std::string& method, const std::string& path,
                       const std::string& body = "", std::map<std::string, std::string> query = {}) {
  return r.handle(method, path, query, body);
}

}  // namespace

TEST(Sessions, RunMatchesOfflineSimulation) {
  SessionManager m(unpaced());
  const auto id = m.start("S4", control::tcp_original());
  ASSERT_TRUE(m.wait(id, 60.0));
  const auto snap = m.snapshot(id);
  EXPECT_EQ(snap.status, SessionStatus::Finished);
  ASSERT_TRUE(snap.result);
  const auto offline = harness::simulate_run(m.suite()[4], control::tcp_original(), m.options().config, 0);
  EXPECT_EQ(*snap.result, offline.result);
  const auto frames = all_frames(m, id);
  ASSERT_FALSE(frames.empty());
  for (std::size_t i = 1; i < frames.size(); ++i) EXPECT_EQ(frames[i].seq, frames[i - 1].seq + 1);
  EXPECT_EQ(frames.front().tick, 0);
}

TEST(Sessions, ConcurrentSessionsAreIsolated) {
  SessionManager m(unpaced());
  const auto a = m.start("S5", control::tcp_original());
  const auto b = m.start("S5", control::tcp_tuned());
  const auto c = m.start("S5", control::tcp_original());
  ASSERT_TRUE(m.wait(a) && m.wait(b) && m.wait(c));
  const auto fa = all_frames(m, a);
  const auto fc = all_frames(m, c);
  EXPECT_EQ(fa, fc);
  EXPECT_NE(fa, all_frames(m, b));
  const auto offline = harness::simulate_run(m.suite()[5], control::tcp_tuned(), m.options().config, 0);
  EXPECT_EQ(*m.snapshot(b).result, offline.result);
}

TEST(Sessions, GainUpdateRestartsWithNextRun) {
  SessionManager m(unpaced());
  const auto id = m.start("S1", control::tcp_original());
  ASSERT_TRUE(m.wait(id));
  EXPECT_EQ(m.snapshot(id).run, 1);
  const auto before = m.snapshot(id).next_seq;
  m.set_gains(id, control::tcp_tuned());
  ASSERT_TRUE(m.wait(id));
  const auto snap = m.snapshot(id);
  EXPECT_EQ(snap.run, 2);
  EXPECT_EQ(snap.gains, control::tcp_tuned());
  ASSERT_EQ(snap.commands.size(), 2U);
  EXPECT_EQ(snap.commands[1].kind, "gains");
  const auto page = m.telemetry(id, before, 1'000'000);
  ASSERT_FALSE(page.frames.empty());
  EXPECT_EQ(page.frames.front().seq, before);
  EXPECT_EQ(page.frames.front().run, 2);
  EXPECT_EQ(page.frames.front().tick, 0);
}

TEST(Sessions, CommandLogReplaysToIdenticalTelemetry) {
  std::vector<service::Frame> original;
  std::vector<service::Command> commands;
  {
    SessionManager m(unpaced());
    const auto id = m.start("S2", control::tcp_original());
    ASSERT_TRUE(m.wait(id));
    m.set_gains(id, {6.0, 0.5, 1.5, 0.8, 0.4});
    ASSERT_TRUE(m.wait(id));
    original = all_frames(m, id);
    commands = m.snapshot(id).commands;
  }
  SessionManager fresh(unpaced());
  std::string id;
  for (const auto& c : commands) {
    if (c.kind == "start") {
      id = fresh.start(c.scenario_id, c.gains);
    } else {
      fresh.set_gains(id, c.gains);
    }
    ASSERT_TRUE(fresh.wait(id));
  }
  EXPECT_EQ(all_frames(fresh, id), original);
}

TEST(Sessions, SilentClientTimesOutAfterSixtySeconds) {
  FakeClock clock;
  auto options = unpaced();
  SessionManager m(options, clock.clock());
  const auto id = m.start("S0", control::tcp_tuned());
  ASSERT_TRUE(m.wait(id));
  clock.advance(59.0);
  EXPECT_TRUE(m.sweep().empty());
  m.heartbeat(id);
  clock.advance(60.0);
  EXPECT_TRUE(m.sweep().empty());
  clock.advance(1.0);
  const auto closed = m.sweep();
  ASSERT_EQ(closed.size(), 1U);
  const auto snap = m.snapshot(id);
  EXPECT_EQ(snap.status, SessionStatus::Closed);
  EXPECT_EQ(snap.close_reason, "simulation_timeout");
  EXPECT_THROW(m.heartbeat(id), service::ApiError);
}

TEST(Sessions, TimeoutStopsARunningSimulation) {
  FakeClock clock;
  ServiceOptions options;
  options.speed = 0.05;  // slow enough to still be running when swept
  SessionManager m(options, clock.clock());
  const auto id = m.start("S0", control::tcp_tuned());
  clock.advance(61.0);
  ASSERT_EQ(m.sweep().size(), 1U);
  const auto snap = m.snapshot(id);
  EXPECT_EQ(snap.status, SessionStatus::Closed);
  ASSERT_TRUE(snap.result);
  ASSERT_TRUE(snap.result->shutdown);
  EXPECT_EQ(snap.result->shutdown->kind, scoring::ShutdownKind::SimulationTimeout);
}

TEST(Sessions, CapIsEnforced) {
  SessionManager m(unpaced(2));
  const auto a = m.start("S0", control::tcp_tuned());
  m.start("S1", control::tcp_tuned());
  try {
    m.start("S2", control::tcp_tuned());
    FAIL() << "expected the cap to reject a third session";
  } catch (const service::ApiError& e) {
    EXPECT_EQ(e.status, 429);
  }
  m.close(a);
  EXPECT_NO_THROW(m.start("S2", control::tcp_tuned()));
}

TEST(Api, PresetsAndScenarios) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  const auto presets = call(r, "GET", "/api/v1/presets");
  EXPECT_EQ(presets.status, 200);
  EXPECT_EQ(presets.body["api_version"], 1);
  EXPECT_EQ(presets.body["presets"].size(), 2U);
  const auto scenarios = call(r, "GET", "/api/v1/scenarios");
  EXPECT_EQ(scenarios.body["scenarios"].size(), 16U);
  EXPECT_EQ(scenarios.body["scenarios"][7]["id"], "S7");
}

TEST(Api, InvalidSessionPayloadNamesEveryField) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  const auto res = call(r, "POST", "/api/v1/sessions",
                        R"({"gains": {"kp": -1, "ki": "x", "kd": 1, "max_throttle": 2, "bogus": 1}})");
  EXPECT_EQ(res.status, 400);
  const auto& fields = res.body["error"]["fields"];
  EXPECT_EQ(res.body["error"]["code"], "invalid_request");
  EXPECT_TRUE(fields.contains("scenario"));
  EXPECT_TRUE(fields.contains("gains.kp"));
  EXPECT_TRUE(fields.contains("gains.ki"));
  EXPECT_TRUE(fields.contains("gains.max_throttle"));
  EXPECT_TRUE(fields.contains("gains.brake_speed"));
  EXPECT_TRUE(fields.contains("gains.bogus"));
  EXPECT_FALSE(fields.contains("gains.kd"));
  EXPECT_TRUE(m.list().empty());
}

TEST(Api, MalformedRequests) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  EXPECT_EQ(call(r, "POST", "/api/v1/sessions", "{not json").status, 400);
  EXPECT_EQ(call(r, "POST", "/api/v1/sessions", R"({"scenario": "S99"})").status, 404);
  EXPECT_EQ(call(r, "GET", "/api/v1/sessions/s42").status, 404);
  EXPECT_EQ(call(r, "GET", "/api/v1/nowhere").status, 404);
  EXPECT_EQ(call(r, "POST", "/api/v1/sessions", R"({"scenario": "S0", "gains": "warp"})").status, 400);
}

TEST(Api, SessionLifecycle) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  const auto created = call(r, "POST", "/api/v1/sessions", R"({"scenario": "S0", "gains": "tcp-tuned"})");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["session"]["id"];
  ASSERT_TRUE(m.wait(id));
  const auto page = call(r, "GET", "/api/v1/sessions/" + id + "/telemetry", "", {{"since", "0"}, {"limit", "5"}});
  ASSERT_EQ(page.status, 200);
  EXPECT_EQ(page.body["frames"].size(), 5U);
  EXPECT_EQ(page.body["next"], 5);
  EXPECT_EQ(page.body["status"], "finished");
  EXPECT_EQ(call(r, "GET", "/api/v1/sessions/" + id + "/telemetry", "", {{"since", "x"}}).status, 400);
  EXPECT_EQ(call(r, "POST", "/api/v1/sessions/" + id + "/heartbeat").status, 200);
  const auto updated = call(r, "POST", "/api/v1/sessions/" + id + "/gains",
                            R"({"gains": {"kp": 6, "ki": 0.5, "kd": 1, "max_throttle": 0.8, "brake_speed": 0.4}})");
  ASSERT_EQ(updated.status, 200);
  EXPECT_EQ(updated.body["session"]["run"], 2);
  EXPECT_EQ(call(r, "GET", "/api/v1/sessions").body["sessions"].size(), 1U);
  EXPECT_EQ(call(r, "DELETE", "/api/v1/sessions/" + id).status, 200);
  EXPECT_EQ(call(r, "GET", "/api/v1/sessions/" + id).status, 404);
}

TEST(Api, CapAnswersTooManyRequests) {
  SessionManager m(unpaced(1));
  ApiRouter r(m);
  EXPECT_EQ(call(r, "POST", "/api/v1/sessions", R"({"scenario": "S0"})").status, 201);
  const auto res = call(r, "POST", "/api/v1/sessions", R"({"scenario": "S1"})");
  EXPECT_EQ(res.status, 429);
  EXPECT_EQ(res.body["error"]["code"], "session_cap");
}

TEST(Api, CompareRejectsMismatchedSeeds) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  const auto res = call(r, "POST", "/api/v1/compare",
                        R"({"a": {"gains": "tcp-original", "seed": 7}, "b": {"gains": "tcp-tuned", "seed": 8}})");
  EXPECT_EQ(res.status, 409);
  EXPECT_EQ(res.body["error"]["code"], "seed_mismatch");
  EXPECT_EQ(call(r, "POST", "/api/v1/scorecards", R"({"gains": "tcp-tuned", "seed": -3})").status, 400);
}

TEST(Api, ScorecardMatchesOfflineAggregate) {
  SessionManager m(unpaced());
  ApiRouter r(m);
  const auto res = call(r, "POST", "/api/v1/scorecards", R"({"gains": "tcp-original"})");
  ASSERT_EQ(res.status, 200);
  EXPECT_EQ(res.body["seed"], 7);
  EXPECT_NEAR(res.body["scorecard"]["global_driving_score"].get<double>(), 84.797527813355799, 1e-9);
  EXPECT_EQ(res.body["runs"].size(), 48U);
}

TEST(Http, LoopbackSmoke) {
  SessionManager m(unpaced());
  service::HttpService http(m);
  const int port = http.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  const auto presets = client.Get("/api/v1/presets");
  ASSERT_TRUE(presets);
  EXPECT_EQ(presets->status, 200);
  EXPECT_EQ(presets->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto created = client.Post("/api/v1/sessions", R"({"scenario": "S0"})", "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  const std::string id = io::json::parse(created->body)["session"]["id"];
  ASSERT_TRUE(m.wait(id));
  const auto page = client.Get("/api/v1/sessions/" + id + "/telemetry?since=0&limit=3");
  ASSERT_TRUE(page);
  EXPECT_EQ(io::json::parse(page->body)["frames"].size(), 3U);
  const auto bad = client.Post("/api/v1/sessions", "{}", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  const auto gone = client.Delete("/api/v1/sessions/" + id);
  ASSERT_TRUE(gone);
  EXPECT_EQ(gone->status, 200);
  http.stop();
}
