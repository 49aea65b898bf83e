#pragma once

// Derivative-free search over GainSet maximizing the suite's global driving
// score: exhaustive grid search and one-knob-at-a-time coordinate descent.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drivetune/common.hpp"
#include "drivetune/control.hpp"
#include "drivetune/scenario.hpp"
#include "drivetune/scoring.hpp"
#include "drivetune/simulation.hpp"

namespace drivetune::tuner {

/// Rounds away binary noise so lattice points compare and print exactly.
inline double snap(double x) { return std::round(x * 1e9) / 1e9; }

/// Closed interval sampled on the lattice lo + i * step.
struct Axis {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  static Axis fixed(double v) { return {v, v, 1.0}; }

  std::size_t size() const {
    return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  }
  double value(std::size_t i) const { return snap(lo + static_cast<double>(i) * step); }
  bool contains(double v) const { return v >= lo - 1e-9 && v <= hi + 1e-9; }

  friend bool operator==(const Axis&, const Axis&) = default;
};

inline constexpr std::array<const char*, 5> kCoordinateNames{"kp", "ki", "kd", "max_throttle",
                                                             "brake_speed"};

struct SearchSpace {
  Axis kp{1.0, 20.0, 1.0};
  Axis ki{0.0, 2.0, 0.1};
  Axis kd{0.0, 5.0, 0.5};
  Axis max_throttle{0.5, 1.0, 0.05};
  Axis brake_speed{0.3, 0.6, 0.05};

  /// Coordinates in the fixed descent order.
  std::array<const Axis*, 5> axes() const { return {&kp, &ki, &kd, &max_throttle, &brake_speed}; }

  std::size_t grid_size() const {
    std::size_t n = 1;
    for (const auto* a : axes()) n *= a->size();
    return n;
  }

  bool contains(const control::GainSet& g) const {
    return kp.contains(g.kp) && ki.contains(g.ki) && kd.contains(g.kd) &&
           max_throttle.contains(g.max_throttle) && brake_speed.contains(g.brake_speed);
  }

  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

inline double coordinate(const control::GainSet& g, std::size_t i) {
  switch (i) {
    case 0: return g.kp;
    case 1: return g.ki;
    case 2: return g.kd;
    case 3: return g.max_throttle;
    default: return g.brake_speed;
  }
}

inline control::GainSet with_coordinate(control::GainSet g, std::size_t i, double v) {
  switch (i) {
    case 0: g.kp = v; break;
    case 1: g.ki = v; break;
    case 2: g.kd = v; break;
    case 3: g.max_throttle = v; break;
    default: g.brake_speed = v; break;
  }
  return g;
}

inline void validate(const SearchSpace& s) {
  const auto axes = s.axes();
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const std::string name = kCoordinateNames[i];
    require_finite(axes[i]->lo, name + ".lo");
    require_finite(axes[i]->hi, name + ".hi");
    require_finite(axes[i]->step, name + ".step");
    require(axes[i]->step > 0.0, "field '" + name + ".step' must be > 0");
    require(axes[i]->lo <= axes[i]->hi, "field '" + name + "' has lo > hi");
  }
  // Every lattice corner must be an admissible gain set.
  control::validate({s.kp.lo, s.ki.lo, s.kd.lo, s.max_throttle.lo, s.brake_speed.lo});
  control::validate({s.kp.hi, s.ki.hi, s.kd.hi, s.max_throttle.hi, s.brake_speed.hi});
}

/// One evaluated gain set. `seed` identifies the suite it was scored on.
struct Evaluation {
  control::GainSet gains;
  double score = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

struct TuneReport {
  std::string method;  // "grid" or "descent"
  control::GainSet best;
  double best_score = 0.0;
  std::vector<Evaluation> log;        // every evaluation, in order
  std::vector<Evaluation> accepted;   // descent path, start first; strictly increasing
  int iterations = 0;                 // rounds (descent) or grid points (grid)
  double wall_time = 0.0;             // s, excluded from equality

  friend bool operator==(const TuneReport& a, const TuneReport& b) {
    return a.method == b.method && a.best == b.best && a.best_score == b.best_score &&
           a.log == b.log && a.accepted == b.accepted && a.iterations == b.iterations;
  }
};

using Objective = std::function<double(const control::GainSet&)>;

struct TuneOptions {
  std::size_t max_evaluations = 4096;  // grid budget
  int max_rounds = 10;                 // descent budget
  std::uint64_t seed = 0;              // recorded in the log
  /// Scores already known, e.g. from a resumed log; reused instead of evaluated.
  std::map<control::GainSet, double> known;
  std::function<void(const Evaluation&)> on_evaluation;
};

/// Global driving score of `gains` over every scenario and repetition.
inline double evaluate(const control::GainSet& gains, const std::vector<scenario::Scenario>& suite,
                       const harness::SimConfig& config) {
  control::validate(gains);
  const auto out = harness::run_suite(suite, gains, config);
  return scoring::aggregate(out.runs).global_driving_score;
}

inline Objective suite_objective(const std::vector<scenario::Scenario>& suite,
                                 const harness::SimConfig& config) {
  return [&suite, config](const control::GainSet& g) { return evaluate(g, suite, config); };
}

namespace detail {

class Memo {
 public:
  Memo(const Objective& objective, const TuneOptions& options, TuneReport& report)
      : objective_(objective), options_(options), report_(report), cache_(options.known) {}

  /// Evaluates once per distinct gain set; repeated queries hit the cache and
  /// are not logged again.
  double operator()(const control::GainSet& g) {
    if (auto it = seen_.find(g); it != seen_.end()) return it->second;
    double score = 0.0;
    if (auto it = cache_.find(g); it != cache_.end()) {
      score = it->second;
    } else {
      score = objective_(g);
    }
    seen_.emplace(g, score);
    Evaluation e{g, score, options_.seed};
    report_.log.push_back(e);
    if (options_.on_evaluation) options_.on_evaluation(e);
    return score;
  }

 private:
  const Objective& objective_;
  const TuneOptions& options_;
  TuneReport& report_;
  std::map<control::GainSet, double> cache_;
  std::map<control::GainSet, double> seen_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Exhaustive search. Among equal scores the lexicographically smallest
/// (kp, ki, kd, max_throttle, brake_speed) wins.
inline TuneReport grid_search(const SearchSpace& space, const Objective& objective,
                              const TuneOptions& options = {}) {
  validate(space);
  const std::size_t total = space.grid_size();
  require(total <= options.max_evaluations,
          "grid of " + std::to_string(total) + " points exceeds the evaluation budget of " +
              std::to_string(options.max_evaluations));

  const auto t0 = std::chrono::steady_clock::now();
  TuneReport report;
  report.method = "grid";
  detail::Memo memo(objective, options, report);
  bool have_best = false;
  for (std::size_t a = 0; a < space.kp.size(); ++a)
    for (std::size_t b = 0; b < space.ki.size(); ++b)
      for (std::size_t c = 0; c < space.kd.size(); ++c)
        for (std::size_t d = 0; d < space.max_throttle.size(); ++d)
          for (std::size_t e = 0; e < space.brake_speed.size(); ++e) {
            const control::GainSet g{space.kp.value(a), space.ki.value(b), space.kd.value(c),
                                     space.max_throttle.value(d), space.brake_speed.value(e)};
            const double score = memo(g);
            // Visiting order is lexicographic, so only a strictly better score replaces.
            if (!have_best || score > report.best_score) {
              report.best = g;
              report.best_score = score;
              have_best = true;
            }
          }
  report.iterations = static_cast<int>(total);
  report.wall_time = detail::seconds_since(t0);
  return report;
}

/// Cycles kp, ki, kd, max_throttle, brake_speed; probes one step below and
/// above the incumbent and moves to the better probe only on strict
/// improvement. Stops after a round without a move or at `max_rounds`.
inline TuneReport coordinate_descent(const SearchSpace& space, const Objective& objective,
                                     const control::GainSet& start,
                                     const TuneOptions& options = {}) {
  validate(space);
  control::validate(start);
  require(space.contains(start), "start gain set lies outside the search space");
  require(options.max_rounds > 0, "field 'max_rounds' must be > 0");

  const auto t0 = std::chrono::steady_clock::now();
  TuneReport report;
  report.method = "descent";
  detail::Memo memo(objective, options, report);

  // Probes sit at start + k * step, so revisits hit the memo exactly.
  std::array<long, 5> offset{};
  const auto axes = space.axes();
  auto point = [&](const std::array<long, 5>& k) {
    control::GainSet g = start;
    for (std::size_t i = 0; i < 5; ++i) {
      g = with_coordinate(g, i, snap(coordinate(start, i) + static_cast<double>(k[i]) * axes[i]->step));
    }
    return g;
  };

  control::GainSet incumbent = point(offset);
  double incumbent_score = memo(incumbent);
  report.accepted.push_back({incumbent, incumbent_score, options.seed});

  for (int round = 0; round < options.max_rounds; ++round) {
    report.iterations = round + 1;
    bool moved = false;
    for (std::size_t i = 0; i < 5; ++i) {
      std::optional<std::array<long, 5>> best_offset;
      double best_score = incumbent_score;
      for (long dir : {-1L, 1L}) {
        auto k = offset;
        k[i] += dir;
        const auto g = point(k);
        if (!axes[i]->contains(coordinate(g, i))) continue;
        const double score = memo(g);
        if (score > best_score) {
          best_score = score;
          best_offset = k;
        }
      }
      if (best_offset) {
        offset = *best_offset;
        incumbent = point(offset);
        incumbent_score = best_score;
        report.accepted.push_back({incumbent, incumbent_score, options.seed});
        moved = true;
      }
    }
    if (!moved) break;
  }

  report.best = incumbent;
  report.best_score = incumbent_score;
  report.wall_time = detail::seconds_since(t0);
  return report;
}

inline TuneReport grid_search(const SearchSpace& space, const std::vector<scenario::Scenario>& suite,
                              const harness::SimConfig& config, TuneOptions options = {}) {
  options.seed = config.seed;
  return grid_search(space, suite_objective(suite, config), options);
}

inline TuneReport coordinate_descent(const SearchSpace& space,
                                     const std::vector<scenario::Scenario>& suite,
                                     const harness::SimConfig& config,
                                     const control::GainSet& start, TuneOptions options = {}) {
  options.seed = config.seed;
  return coordinate_descent(space, suite_objective(suite, config), start, options);
}

}  // namespace drivetune::tuner
