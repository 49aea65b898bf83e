#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "drivetune/cli.hpp"
#include "drivetune/io.hpp"
#include "drivetune/simulation.hpp"
#include "support.hpp"

using namespace drivetune;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "drivetune");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Flips one digit inside the first tick line.
std::string tamper(std::string text) {
  const auto line = text.find('\n') + 1;
  const auto at = text.find("\"v_ref\":", line);
  auto pos = text.find_first_of("123456789", at);
  text[pos] = text[pos] == '9' ? '8' : static_cast<char>(text[pos] + 1);
  return text;
}

class EnvGuard {
public:
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) saved_ = v;
  }
  ~EnvGuard() {
    if (saved_) {
      ::setenv(name_, saved_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }

private:
  const char* name_;
  std::optional<std::string> saved_;
};

}  // namespace

TEST(Simulation, EmptyStraightRouteCompletesClean) {
  const auto s = fixtures::straight_scenario();
  harness::SimConfig config;
  const auto run = harness::simulate_run(s, control::tcp_tuned(), config);
  EXPECT_EQ(run.result.completion, 100.0);
  EXPECT_EQ(run.result.penalty, 1.0);
  EXPECT_TRUE(run.result.infractions.empty());
  EXPECT_FALSE(run.result.shutdown);
  EXPECT_FALSE(run.trace.records.empty());
}

TEST(Simulation, IdenticalInputsGiveIdenticalTraces) {
  const harness::SimConfig config;
  const auto suite = scenario::build_suite(7);
  const auto a = harness::simulate_run(suite[5], control::tcp_original(), config, 1);
  const auto b = harness::simulate_run(suite[5], control::tcp_original(), config, 1);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.result, b.result);
  const auto c = harness::simulate_run(suite[5], control::tcp_original(), config, 2);
  EXPECT_NE(a.trace, c.trace);
}

TEST(Simulation, StreamingScoreEqualsBatchScore) {
  const harness::SimConfig config;
  const auto suite = scenario::build_suite(7);
  for (int i : {1, 4, 7, 10, 13}) {
    const auto run = harness::simulate_run(suite[i], control::tcp_original(), config, 0);
    auto batch = scoring::score_trace(run.trace, suite[i]);
    EXPECT_EQ(batch.completion, run.result.completion) << suite[i].id;
    EXPECT_EQ(batch.infractions, run.result.infractions) << suite[i].id;
    EXPECT_EQ(batch.shutdown, run.result.shutdown) << suite[i].id;
    EXPECT_EQ(batch.score, run.result.score) << suite[i].id;
  }
}

TEST(Simulation, BlockedOriginalGainsHaltAtTheShutdownTick) {
  const harness::SimConfig config;
  const auto suite = scenario::build_suite(7);
  const auto run = harness::simulate_run(suite[7], control::tcp_original(), config, 0);
  ASSERT_TRUE(run.result.shutdown);
  EXPECT_EQ(run.result.shutdown->kind, scoring::ShutdownKind::AgentBlocked);
  EXPECT_EQ(static_cast<std::int64_t>(run.trace.records.size()), run.result.shutdown->tick + 1);
  EXPECT_LT(run.result.completion, 100.0);
}

TEST(Simulation, TickCapEndsTheRunAsTimeout) {
  harness::SimConfig config;
  config.tick_cap = 50;
  const auto run = harness::simulate_run(fixtures::straight_scenario(), control::tcp_tuned(), config);
  ASSERT_TRUE(run.result.shutdown);
  EXPECT_EQ(run.result.shutdown->kind, scoring::ShutdownKind::RouteTimeout);
  EXPECT_EQ(run.result.shutdown->tick, 50);
}

TEST(Simulation, ObserverCanCancel) {
  const harness::SimConfig config;
  int seen = 0;
  const auto run = harness::simulate_run(fixtures::straight_scenario(), control::tcp_tuned(), config, 0,
                                         [&](const TickRecord&) { return ++seen < 10; });
  EXPECT_TRUE(run.cancelled);
  EXPECT_EQ(run.trace.records.size(), 10U);
}

TEST(Suite, WorkerCountDoesNotChangeResults) {
  harness::SimConfig config;
  config.repetitions = 1;
  const auto suite = scenario::build_suite(7);
  const auto serial = harness::run_suite(suite, control::tcp_original(), config);
  config.workers = 4;
  const auto parallel = harness::run_suite(suite, control::tcp_original(), config);
  EXPECT_EQ(serial.runs, parallel.runs);
}

TEST(Persistence, TraceRoundTripAndReplay) {
  const harness::SimConfig config;
  const auto suite = scenario::build_suite(7);
  auto run = harness::simulate_run(suite[4], control::tcp_original(), config, 0);
  io::TraceFile file{suite[4], control::tcp_original(), "tcp-original", run.trace, run.result};
  const std::string text = io::trace_to_string(file);
  const auto back = io::trace_from_string(text);
  EXPECT_EQ(back.trace, run.trace);
  EXPECT_EQ(back.scenario, suite[4]);
  EXPECT_EQ(back.gains, control::tcp_original());
  const auto outcome = io::replay(back);
  EXPECT_TRUE(outcome.matches);
  EXPECT_EQ(outcome.rescored.score, run.result.score);
}

TEST(Persistence, TamperedTraceIsCorrupt) {
  const harness::SimConfig config;
  const auto s = fixtures::straight_scenario();
  auto run = harness::simulate_run(s, control::tcp_tuned(), config, 0);
  io::TraceFile file{s, control::tcp_tuned(), "tcp-tuned", run.trace, run.result};
  const std::string text = io::trace_to_string(file);
  EXPECT_THROW(io::trace_from_string(tamper(text)), io::CorruptData);
  EXPECT_THROW(io::trace_from_string(text.substr(0, text.size() / 2)), io::CorruptData);
}

TEST(Persistence, SuiteRoundTrip) {
  const auto suite = scenario::build_suite(8);
  const auto back = io::suite_from_string(io::suite_to_string({8, suite}));
  EXPECT_EQ(back.seed, 8U);
  EXPECT_EQ(back.scenarios, suite);
  EXPECT_THROW(io::suite_from_string("{\"format\":\"nope\"}"), InvalidInput);
}

TEST(Persistence, ScoreCardRoundTrip) {
  harness::SimConfig config;
  config.repetitions = 1;
  const auto suite = scenario::build_suite(7);
  io::ScoreCardFile f;
  f.seed = 7;
  f.gains = control::tcp_original();
  f.gains_name = "tcp-original";
  f.runs = harness::run_suite(suite, f.gains, config).runs;
  f.card = scoring::aggregate(f.runs);
  const auto back = io::scorecard_from_jsonl(io::scorecard_to_jsonl(f));
  EXPECT_EQ(back.seed, f.seed);
  EXPECT_EQ(back.gains, f.gains);
  EXPECT_EQ(back.runs, f.runs);
  EXPECT_EQ(back.card, f.card);
}

TEST(Persistence, CompareRejectsDifferentSeeds) {
  io::ScoreCardFile a, b;
  a.seed = 7;
  b.seed = 8;
  EXPECT_THROW(io::compare(a, b), InvalidInput);
}

TEST(Config, PrecedenceIsDefaultsFileEnvironmentFlags) {
  fixtures::ScratchDir dir("config");
  const auto file = dir.path() / "config.json";
  io::write_text_file(file, R"({"alpha": 0.25, "seed": 9, "output_dir": "from-file", "gains": "tcp-tuned"})");
  EnvGuard guard(io::kOutputDirEnv);
  ::unsetenv(io::kOutputDirEnv);

  cli::ConfigFlags flags;
  flags.config_file = file.string();
  auto c = flags.resolve();
  EXPECT_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.seed, 9U);
  EXPECT_EQ(c.output_dir, "from-file");
  EXPECT_EQ(c.gains, control::tcp_tuned());
  EXPECT_EQ(c.repetitions, 3);

  ::setenv(io::kOutputDirEnv, "from-env", 1);
  EXPECT_EQ(flags.resolve().output_dir, "from-env");

  flags.output_dir = "from-flag";
  flags.alpha = 0.5;
  flags.kp = 6.0;
  c = flags.resolve();
  EXPECT_EQ(c.output_dir, "from-flag");
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.gains.kp, 6.0);
  EXPECT_EQ(c.gains.ki, control::tcp_tuned().ki);
  EXPECT_EQ(c.gains_name, "custom");
}

TEST(Config, RejectsUnknownAndInvalidFields) {
  EXPECT_THROW(io::config_from_json(io::json::parse(R"({"alpah": 0.2})")), InvalidInput);
  EXPECT_THROW(io::config_from_json(io::json::parse(R"({"alpha": 0.7})")), InvalidInput);
  EXPECT_THROW(io::config_from_json(io::json::parse(R"({"repetitions": 0})")), InvalidInput);
}

TEST(Cli, GainArgument) {
  EXPECT_EQ(cli::parse_gain_arg("tcp-tuned").first, control::tcp_tuned());
  EXPECT_EQ(cli::parse_gain_arg("6,0.5,1,0.8,0.4").first, (control::GainSet{6, 0.5, 1, 0.8, 0.4}));
  EXPECT_THROW(cli::parse_gain_arg("6,0.5,1"), InvalidInput);
  EXPECT_THROW(cli::parse_gain_arg("fast"), InvalidInput);
  EXPECT_THROW(cli::parse_gain_arg("6,0.5,1,1.5,0.4"), InvalidInput);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(invoke({"suite", "--no-such-flag"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--alpha", "0.9"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--gains", "warp"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
}

TEST(Cli, RunThenReplay) {
  fixtures::ScratchDir dir("cli-run");
  const auto r = invoke({"run", "--scenario", "S4", "--output-dir", dir.path().string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto trace = dir.path() / "traces" / io::trace_file_name("S4", 0);
  ASSERT_TRUE(fs::exists(trace));
  const auto ok = invoke({"replay", trace.string()});
  EXPECT_EQ(ok.code, cli::kExitOk) << ok.err;
  EXPECT_NE(ok.out.find("ok"), std::string::npos);

  io::write_text_file(trace, tamper(io::read_text_file(trace)));
  const auto bad = invoke({"replay", trace.string()});
  EXPECT_EQ(bad.code, cli::kExitInternal);
  EXPECT_NE(bad.err.find("checksum"), std::string::npos) << bad.err;
}

TEST(Cli, UnknownScenarioIsAConfigError) {
  fixtures::ScratchDir dir("cli-bad");
  EXPECT_EQ(invoke({"run", "--scenario", "S99", "--output-dir", dir.path().string()}).code,
            cli::kExitConfig);
}

TEST(Cli, SerialAndParallelSuitesWriteIdenticalArtifacts) {
  fixtures::ScratchDir a("cli-serial");
  fixtures::ScratchDir b("cli-parallel");
  const auto ra = invoke({"suite", "--repetitions", "1", "--workers", "1", "--output-dir", a.path().string()});
  const auto rb = invoke({"suite", "--repetitions", "1", "--workers", "4", "--output-dir", b.path().string()});
  ASSERT_EQ(ra.code, cli::kExitOk) << ra.err;
  ASSERT_EQ(rb.code, cli::kExitOk) << rb.err;
  EXPECT_EQ(io::read_text_file(a.path() / "scorecard.jsonl"),
            io::read_text_file(b.path() / "scorecard.jsonl"));
  std::size_t traces = 0;
  for (const auto& entry : fs::directory_iterator(a.path() / "traces")) {
    const auto other = b.path() / "traces" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other));
    EXPECT_EQ(io::read_text_file(entry.path()), io::read_text_file(other)) << entry.path();
    ++traces;
  }
  EXPECT_EQ(traces, 16U);
  EXPECT_TRUE(fs::exists(a.path() / "scorecard.txt"));
  EXPECT_TRUE(fs::exists(a.path() / "chart.csv"));
}

TEST(Cli, SuiteFileReproducesTheSeededSuite) {
  fixtures::ScratchDir a("cli-seed");
  fixtures::ScratchDir b("cli-file");
  const auto fixture = std::string(DRIVETUNE_FIXTURE_DIR) + "/suite_seed8.json";
  ASSERT_EQ(invoke({"suite", "--no-traces", "--repetitions", "1", "--seed", "8", "--output-dir", a.path().string()}).code, 0);
  ASSERT_EQ(invoke({"suite", "--no-traces", "--repetitions", "1", "--suite", fixture, "--output-dir", b.path().string()}).code, 0);
  EXPECT_EQ(io::read_text_file(a.path() / "scorecard.jsonl"),
            io::read_text_file(b.path() / "scorecard.jsonl"));
  fixtures::ScratchDir c("cli-mismatch");
  EXPECT_EQ(invoke({"suite", "--suite", fixture, "--seed", "7", "--output-dir", c.path().string()}).code,
            cli::kExitConfig);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  fixtures::ScratchDir dir("cli-env");
  EnvGuard guard(io::kOutputDirEnv);
  ::setenv(io::kOutputDirEnv, dir.path().string().c_str(), 1);
  ASSERT_EQ(invoke({"run", "--scenario", "S0"}).code, cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir.path() / "traces" / io::trace_file_name("S0", 0)));
}

TEST(Cli, TuneWritesAResumableLog) {
  fixtures::ScratchDir dir("cli-tune");
  const auto space = dir.path() / "space.json";
  io::write_text_file(space, R"({"kp": {"lo": 5, "hi": 6, "step": 1}, "ki": {"lo": 0.5, "hi": 0.5, "step": 0.1},
    "kd": {"lo": 1, "hi": 1, "step": 1}, "max_throttle": {"lo": 0.75, "hi": 0.75, "step": 0.05},
    "brake_speed": {"lo": 0.4, "hi": 0.4, "step": 0.05}})");
  const std::vector<std::string> args{"tune", "--method", "grid", "--space", space.string(),
                                      "--repetitions", "1", "--output-dir", dir.path().string()};
  const auto first = invoke(args);
  ASSERT_EQ(first.code, cli::kExitOk) << first.err;
  const auto log = io::read_text_file(dir.path() / "tune.jsonl");
  EXPECT_EQ(io::known_scores(log, 7).size(), 2U);
  auto resume = args;
  resume.push_back("--resume");
  const auto second = invoke(resume);
  ASSERT_EQ(second.code, cli::kExitOk) << second.err;
  EXPECT_EQ(io::known_scores(io::read_text_file(dir.path() / "tune.jsonl"), 7), io::known_scores(log, 7));
}
