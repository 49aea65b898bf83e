#pragma once

// Command-line front end: run, suite, tune, compare, serve, replay.
// Exit 0 on success, 1 on configuration or usage errors, 2 on internal
// failures and integrity violations.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "drivetune/control.hpp"
#include "drivetune/io.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/scoring.hpp"
#include "drivetune/service.hpp"
#include "drivetune/simulation.hpp"
#include "drivetune/tuner.hpp"

namespace drivetune::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitInternal = 2;

/// Preset name or "kp,ki,kd,max_throttle,brake_speed".
inline std::pair<control::GainSet, std::string> parse_gain_arg(const std::string& text) {
  if (auto g = control::find_preset(text)) return {*g, text};
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput("gains '" + text + "' are neither a preset nor five comma-separated numbers");
    }
  }
  if (v.size() != 5) {
    throw InvalidInput("gains '" + text + "' are neither a preset nor five comma-separated numbers");
  }
  control::GainSet g{v[0], v[1], v[2], v[3], v[4]};
  control::validate(g);
  return {g, "custom"};
}

/// Flags shared by every subcommand; each mirrors a configuration field.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::string> gains;
  std::optional<double> kp, ki, kd, max_throttle, brake_speed;
  std::optional<double> alpha;
  std::optional<std::size_t> history, pid_window;
  std::optional<std::uint64_t> seed;
  std::optional<int> repetitions;
  std::optional<std::string> output_dir;
  std::optional<std::int64_t> tick_cap;
  std::optional<unsigned> workers;
  std::optional<double> dt, accel_gain, brake_gain, drag_coeff, rolling_resist, top_speed,
      steer_gain, lane_half_width;
  std::string suite_file;

  void attach(CLI::App& app, bool with_gains = true) {
    app.add_option("--config", config_file, "JSON configuration file");
    if (with_gains) {
      app.add_option("--gains", gains, "preset name or kp,ki,kd,max_throttle,brake_speed");
      app.add_option("--kp", kp, "proportional gain");
      app.add_option("--ki", ki, "integral gain");
      app.add_option("--kd", kd, "derivative gain");
      app.add_option("--max-throttle", max_throttle, "throttle clamp");
      app.add_option("--brake-speed", brake_speed, "brake trigger ratio");
    }
    app.add_option("--alpha", alpha, "fusion weight in [0, 0.5]");
    app.add_option("--history", history, "situation window length in ticks");
    app.add_option("--pid-window", pid_window, "integral window length in ticks");
    app.add_option("--seed", seed, "suite seed");
    app.add_option("--repetitions", repetitions, "runs per scenario");
    app.add_option("--output-dir", output_dir, "output directory");
    app.add_option("--tick-cap", tick_cap, "safety cap on ticks per run");
    app.add_option("--workers", workers, "parallel simulation workers");
    app.add_option("--dt", dt, "plant tick in seconds");
    app.add_option("--accel-gain", accel_gain, "m/s^2 per unit throttle");
    app.add_option("--brake-gain", brake_gain, "m/s^2 per unit brake");
    app.add_option("--drag-coeff", drag_coeff, "quadratic drag, 1/m");
    app.add_option("--rolling-resist", rolling_resist, "rolling resistance, m/s^2");
    app.add_option("--top-speed", top_speed, "m/s");
    app.add_option("--steer-gain", steer_gain, "rad/s per unit steer");
    app.add_option("--lane-half-width", lane_half_width, "m");
    app.add_option("--suite", suite_file, "load scenarios from a suite file instead of the seed");
  }

  /// Defaults, then the config file, then the environment, then flags.
  harness::SimConfig resolve() const {
    harness::SimConfig c;
    if (!config_file.empty()) c = io::load_config(config_file, c);
    io::apply_environment(c);
    if (gains) std::tie(c.gains, c.gains_name) = parse_gain_arg(*gains);
    auto set = [](auto& slot, const auto& flag) {
      if (flag) slot = *flag;
    };
    const bool custom = kp || ki || kd || max_throttle || brake_speed;
    set(c.gains.kp, kp);
    set(c.gains.ki, ki);
    set(c.gains.kd, kd);
    set(c.gains.max_throttle, max_throttle);
    set(c.gains.brake_speed, brake_speed);
    if (custom) c.gains_name = "custom";
    set(c.alpha, alpha);
    set(c.history, history);
    set(c.pid_window, pid_window);
    set(c.seed, seed);
    set(c.repetitions, repetitions);
    set(c.output_dir, output_dir);
    set(c.tick_cap, tick_cap);
    set(c.workers, workers);
    set(c.plant.dt, dt);
    set(c.plant.accel_gain, accel_gain);
    set(c.plant.brake_gain, brake_gain);
    set(c.plant.drag_coeff, drag_coeff);
    set(c.plant.rolling_resist, rolling_resist);
    set(c.plant.top_speed, top_speed);
    set(c.plant.steer_gain, steer_gain);
    set(c.plant.lane_half_width, lane_half_width);
    harness::validate(c);
    return c;
  }

  std::vector<scenario::Scenario> scenarios(harness::SimConfig& c) const {
    if (suite_file.empty()) return scenario::build_suite(c.seed);
    auto suite = io::suite_from_string(io::read_text_file(suite_file));
    if (!seed) c.seed = suite.seed;
    require(suite.seed == c.seed, "--seed disagrees with the seed recorded in the suite file");
    return suite.scenarios;
  }
};

inline std::string result_line(const scoring::RunResult& r) {
  std::ostringstream ss;
  ss << r.scenario_id << " r" << r.repetition << "  completion " << io::fixed(r.completion)
     << "  penalty " << io::fixed(r.penalty, 3) << "  score " << io::fixed(r.score);
  if (r.shutdown) ss << "  shutdown " << scoring::to_string(r.shutdown->kind);
  for (const auto& e : r.infractions) ss << "  " << scoring::to_string(e.kind);
  if (!r.note.empty()) ss << "  (" << r.note << ")";
  return ss.str();
}

struct SuiteRun {
  io::ScoreCardFile card;
  std::filesystem::path dir;
};

/// Runs the suite and writes traces, scorecard.jsonl, scorecard.txt and
/// chart.csv under `dir`.
inline SuiteRun run_and_save_suite(const std::vector<scenario::Scenario>& suite,
                                   const harness::SimConfig& c, const std::filesystem::path& dir,
                                   bool traces) {
  std::filesystem::create_directories(dir);
  harness::RunSink sink;
  if (traces) {
    sink = [&](const scenario::Scenario& sc, harness::RunOutput& run) {
      io::save_trace(dir / "traces", sc, c.gains, c.gains_name, run.trace, run.result);
    };
  }
  auto out = harness::run_suite(suite, c.gains, c, sink);
  SuiteRun r;
  r.dir = dir;
  r.card.seed = c.seed;
  r.card.gains = c.gains;
  r.card.gains_name = c.gains_name;
  r.card.card = scoring::aggregate(out.runs);
  r.card.runs = std::move(out.runs);
  io::write_text_file(dir / "scorecard.jsonl", io::scorecard_to_jsonl(r.card));
  io::write_text_file(dir / "scorecard.txt", io::scorecard_table(r.card));
  io::write_text_file(dir / "chart.csv", io::chart_csv(r.card.card));
  return r;
}

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

extern "C" inline void drivetune_on_signal(int) { stop_requested() = true; }

/// Parses and executes one command line.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"drivetune: longitudinal controller simulation and tuning workbench"};
  app.require_subcommand(1);

  ConfigFlags run_flags, suite_flags, tune_flags, compare_flags, serve_flags;
  std::string scenario_id = "S0";
  std::uint64_t repetition = 0;
  auto* run = app.add_subcommand("run", "simulate one scenario and persist its trace");
  run_flags.attach(*run);
  run->add_option("--scenario", scenario_id, "scenario id, S0..S15");
  run->add_option("--repetition", repetition, "repetition index (noise stream)");

  bool no_traces = false;
  std::string export_suite;
  auto* suite = app.add_subcommand("suite", "run all scenarios and write a scorecard");
  suite_flags.attach(*suite);
  suite->add_flag("--no-traces", no_traces, "skip writing per-run traces");
  suite->add_option("--export-suite", export_suite, "also write the scenario suite to this file");

  std::string method = "descent", space_file, start_gains = "tcp-original", log_file;
  int max_rounds = 10;
  std::size_t max_evaluations = 4096;
  bool resume = false;
  auto* tune = app.add_subcommand("tune", "search gains maximizing the suite driving score");
  tune_flags.attach(*tune, false);
  tune->add_option("--method", method, "grid or descent")->check(CLI::IsMember({"grid", "descent"}));
  tune->add_option("--space", space_file, "JSON search space (defaults to the full box)");
  tune->add_option("--start", start_gains, "descent start: preset or five numbers");
  tune->add_option("--max-rounds", max_rounds, "descent round limit");
  tune->add_option("--max-evaluations", max_evaluations, "grid size limit");
  tune->add_option("--log", log_file, "evaluation log (default <output-dir>/tune.jsonl)");
  tune->add_flag("--resume", resume, "reuse scores already in the log");

  std::string gains_a, gains_b;
  auto* compare = app.add_subcommand("compare", "score two gain sets on the same suite");
  compare_flags.attach(*compare, false);
  compare->add_option("a", gains_a, "first gain set")->required();
  compare->add_option("b", gains_b, "second gain set")->required();

  std::string host = "127.0.0.1";
  int port = 8765;
  std::size_t max_sessions = 4;
  double speed = 1.0;
  auto* serve = app.add_subcommand("serve", "start the dashboard service");
  serve_flags.attach(*serve);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--max-sessions", max_sessions, "concurrent session cap");
  serve->add_option("--speed", speed, "simulated seconds per wall second; 0 is unpaced");

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "verify and re-score a persisted trace");
  replay->add_option("trace", trace_path, "trace file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*run) {
      auto c = run_flags.resolve();
      const auto scenarios = run_flags.scenarios(c);
      const scenario::Scenario* sc = nullptr;
      for (const auto& s : scenarios) {
        // A bare index names the scenario by position.
        if (s.id == scenario_id || "S" + scenario_id == s.id) sc = &s;
      }
      if (sc == nullptr) throw InvalidInput("unknown scenario '" + scenario_id + "'");
      auto result = harness::simulate_run(*sc, c.gains, c, repetition);
      const auto path = io::save_trace(std::filesystem::path(c.output_dir) / "traces", *sc, c.gains,
                                       c.gains_name, result.trace, result.result);
      out << result_line(result.result) << "\n" << "trace " << path.string() << "\n";
      return kExitOk;
    }

    if (*suite) {
      auto c = suite_flags.resolve();
      const auto scenarios = suite_flags.scenarios(c);
      const std::filesystem::path dir = c.output_dir;
      if (!export_suite.empty()) {
        io::write_text_file(export_suite, io::suite_to_string({c.seed, scenarios}));
      }
      const auto r = run_and_save_suite(scenarios, c, dir, !no_traces);
      out << io::scorecard_table(r.card) << "wrote " << (dir / "scorecard.jsonl").string() << "\n";
      return kExitOk;
    }

    if (*tune) {
      auto c = tune_flags.resolve();
      const auto scenarios = tune_flags.scenarios(c);
      tuner::SearchSpace space;
      if (!space_file.empty()) {
        space = io::space_from_json(io::json::parse(io::read_text_file(space_file)));
      }
      tuner::TuneOptions options;
      options.max_rounds = max_rounds;
      options.max_evaluations = max_evaluations;
      const std::filesystem::path log_path =
          log_file.empty() ? std::filesystem::path(c.output_dir) / "tune.jsonl" : std::filesystem::path(log_file);
      if (resume && std::filesystem::exists(log_path)) {
        options.known = io::known_scores(io::read_text_file(log_path), c.seed);
      }
      if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
      std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
      if (!log) throw std::runtime_error("cannot write '" + log_path.string() + "'");
      std::size_t index = 0;
      options.on_evaluation = [&](const tuner::Evaluation& e) {
        log << io::evaluation_line(e, index++) << std::flush;
        out << "  kp=" << e.gains.kp << " ki=" << e.gains.ki << " kd=" << e.gains.kd
            << " max_throttle=" << e.gains.max_throttle << " brake_speed=" << e.gains.brake_speed
            << "  score " << io::fixed(e.score, 4) << "\n";
      };
      const auto report =
          method == "grid"
              ? tuner::grid_search(space, scenarios, c, options)
              : tuner::coordinate_descent(space, scenarios, c, parse_gain_arg(start_gains).first, options);
      log << io::summary_line(report);
      out << "best kp=" << report.best.kp << " ki=" << report.best.ki << " kd=" << report.best.kd
          << " max_throttle=" << report.best.max_throttle
          << " brake_speed=" << report.best.brake_speed << "  score "
          << io::fixed(report.best_score, 4) << " after " << report.log.size()
          << " evaluations\n";
      return kExitOk;
    }

    if (*compare) {
      auto c = compare_flags.resolve();
      const auto scenarios = compare_flags.scenarios(c);
      const std::filesystem::path root = c.output_dir;
      const auto [ga, na] = parse_gain_arg(gains_a);
      const auto [gb, nb] = parse_gain_arg(gains_b);
      auto ca = c;
      ca.gains = ga;
      ca.gains_name = na == "custom" ? "A" : na;
      auto cb = c;
      cb.gains = gb;
      cb.gains_name = nb == "custom" ? "B" : nb;
      if (ca.gains_name == cb.gains_name) {
        ca.gains_name += "-a";
        cb.gains_name += "-b";
      }
      const auto a = run_and_save_suite(scenarios, ca, root / ca.gains_name, false);
      const auto b = run_and_save_suite(scenarios, cb, root / cb.gains_name, false);
      const auto cmp = io::compare(a.card, b.card);
      io::write_text_file(root / "compare.csv", io::comparison_csv(cmp));
      out << io::comparison_table(cmp);
      return kExitOk;
    }

    if (*serve) {
      auto c = serve_flags.resolve();
      service::ServiceOptions opts;
      opts.config = c;
      opts.max_sessions = max_sessions;
      opts.speed = speed;
      service::SessionManager manager(opts);
      service::HttpService http(manager);
      const int bound = http.start(host, port);
      out << "serving on http://" << host << ":" << bound << "/api/v1 (Ctrl-C to stop)\n" << std::flush;
      stop_requested() = false;
      std::signal(SIGINT, drivetune_on_signal);
      std::signal(SIGTERM, drivetune_on_signal);
      while (!stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      http.stop();
      return kExitOk;
    }

    if (*replay) {
      std::ifstream in(trace_path, std::ios::binary);
      const auto file = io::read_trace(in);
      const auto outcome = io::replay(file);
      out << "recorded " << result_line(outcome.recorded) << "\n"
          << "replayed " << result_line(outcome.rescored) << "\n";
      if (!outcome.matches) {
        err << "error: replayed result differs from the recorded one\n";
        return kExitInternal;
      }
      out << "checksum " << file.result.trace_checksum << " ok\n";
      return kExitOk;
    }
  } catch (const io::CorruptData& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace drivetune::cli
