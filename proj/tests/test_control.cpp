#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "drivetune/control.hpp"
#include "drivetune/step_response.hpp"

using namespace drivetune;
using control::GainSet;
using control::PidState;

TEST(Control, PresetsCarryThePublishedRows) {
  EXPECT_EQ(control::tcp_original(), (GainSet{5.0, 0.5, 1.0, 0.75, 0.4}));
  EXPECT_EQ(control::tcp_tuned(), (GainSet{11.0, 0.1, 1.0, 0.8, 0.45}));
  EXPECT_EQ(*control::find_preset("tcp-original"), control::tcp_original());
  EXPECT_EQ(*control::find_preset("tcp-tuned"), control::tcp_tuned());
  EXPECT_FALSE(control::find_preset("tcp-other"));
}

TEST(Control, ZeroErrorGivesNoActuation) {
  const auto r = control::longitudinal_step(control::tcp_original(), {}, 7.0, 7.0);
  EXPECT_EQ(r.command.throttle, 0.0);
  EXPECT_EQ(r.command.brake, 0.0);
  EXPECT_EQ(r.pid.window_len(), 1U);
}

TEST(Control, BrakeTriggersBelowRatioOfCurrentSpeed) {
  const auto r = control::longitudinal_step(control::tcp_original(), {}, 3.9, 10.0);
  EXPECT_EQ(r.command.brake, 1.0);
  EXPECT_EQ(r.command.throttle, 0.0);
  const auto no = control::longitudinal_step(control::tcp_original(), {}, 4.0, 10.0);
  EXPECT_EQ(no.command.brake, 0.0);
}

TEST(Control, ThrottleClampsAtMaxThrottle) {
  // u = 11*1 + 0.1*1 + 1*1 = 12.1 -> 0.8
  const auto r = control::longitudinal_step(control::tcp_tuned(), {}, 6.0, 5.0);
  EXPECT_EQ(r.command.throttle, 0.8);
  EXPECT_EQ(r.command.brake, 0.0);
}

TEST(Control, UnclampedOutputIsThePidSum) {
  GainSet g{0.1, 0.2, 0.05, 1.0, 0.4};
  PidState pid;
  pid = control::longitudinal_step(g, pid, 5.0, 4.0).pid;  // e = 1
  const auto r = control::longitudinal_step(g, pid, 5.0, 3.0);  // e = 2
  EXPECT_DOUBLE_EQ(r.command.throttle, 0.1 * 2.0 + 0.2 * 1.5 + 0.05 * 1.0);
}

TEST(Control, WindowEvictsOldestFirst) {
  PidState pid;
  pid.capacity = 3;
  for (double v : {1.0, 2.0, 3.0, 4.0}) {
    pid = control::longitudinal_step(control::tcp_original(), pid, 10.0, v).pid;
  }
  ASSERT_EQ(pid.window_len(), 3U);
  EXPECT_EQ(pid.error_window.front(), 8.0);
  EXPECT_EQ(pid.error_window.back(), 6.0);
  EXPECT_EQ(pid.prev_error, 6.0);
}

TEST(Control, ResetEmptiesAndIsIdempotent) {
  PidState pid;
  pid = control::longitudinal_step(control::tcp_original(), pid, 10.0, 2.0).pid;
  const auto once = control::reset(pid);
  EXPECT_EQ(once.window_len(), 0U);
  EXPECT_EQ(once.prev_error, 0.0);
  EXPECT_EQ(control::reset(once), once);
  EXPECT_EQ(control::longitudinal_step(control::tcp_original(), once, 4.0, 4.0).command.throttle,
            0.0);
}

TEST(Control, LateralLaw) {
  EXPECT_EQ(control::lateral_step(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(control::lateral_step(0.1, 0.0), -0.08);
  EXPECT_EQ(control::lateral_step(10.0, 10.0), -1.0);
  EXPECT_EQ(control::lateral_step(-10.0, -10.0), 1.0);
}

TEST(Control, RejectsInvalidInputs) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(control::longitudinal_step(control::tcp_original(), {}, nan, 1.0), InvalidInput);
  EXPECT_THROW(control::longitudinal_step(control::tcp_original(), {}, 1.0, -1.0), InvalidInput);
  EXPECT_THROW(control::validate(GainSet{-1.0, 0.5, 1.0, 0.75, 0.4}), InvalidInput);
  EXPECT_THROW(control::validate(GainSet{5.0, 0.5, 1.0, 0.0, 0.4}), InvalidInput);
  EXPECT_THROW(control::validate(GainSet{5.0, 0.5, 1.0, 0.75, 1.0}), InvalidInput);
  const auto errors = control::gain_errors(GainSet{nan, -1.0, 1.0, 2.0, 0.4});
  ASSERT_EQ(errors.size(), 3U);
  EXPECT_EQ(errors[0].first, "kp");
  EXPECT_EQ(errors[1].first, "ki");
  EXPECT_EQ(errors[2].first, "max_throttle");
}

namespace {

GainSet random_gains(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> k(0.0, 20.0);
  std::uniform_real_distribution<double> t(0.05, 1.0);
  std::uniform_real_distribution<double> b(0.05, 0.95);
  return {k(rng), k(rng) / 10.0, k(rng) / 4.0, t(rng), b(rng)};
}

}  // namespace

TEST(ControlProperties, ThrottleAndBrakeAreExclusive) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> v(0.0, 30.0);
  for (int i = 0; i < 2000; ++i) {
    const auto g = random_gains(rng);
    PidState pid;
    for (int k = 0; k < 30; ++k) {
      const auto r = control::longitudinal_step(g, pid, v(rng), v(rng));
      EXPECT_EQ(r.command.throttle * r.command.brake, 0.0);
      EXPECT_GE(r.command.throttle, 0.0);
      EXPECT_LE(r.command.throttle, g.max_throttle);
      pid = r.pid;
    }
  }
}

TEST(ControlProperties, ThrottleNonDecreasingInKp) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> v(0.0, 30.0);
  std::uniform_real_distribution<double> k(0.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    auto g = random_gains(rng);
    const double a = v(rng);
    const double b = v(rng);
    const double v_ref = std::max(a, b);
    const double speed = std::min(a, b);
    const double k1 = k(rng);
    const double k2 = k(rng);
    g.kp = std::min(k1, k2);
    const double lo = control::longitudinal_step(g, {}, v_ref, speed).command.throttle;
    g.kp = std::max(k1, k2);
    const double hi = control::longitudinal_step(g, {}, v_ref, speed).command.throttle;
    EXPECT_LE(lo, hi);
  }
}

TEST(ControlProperties, IntegralTermIsBoundedByTheWindow) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> v(0.0, 30.0);
  for (int i = 0; i < 500; ++i) {
    GainSet g = random_gains(rng);
    g.kp = 0.0;
    g.kd = 0.0;
    g.max_throttle = 1.0;
    PidState pid;
    double max_abs_error = 0.0;
    for (int k = 0; k < 60; ++k) {
      const double v_ref = v(rng);
      const double speed = v(rng);
      const auto r = control::longitudinal_step(g, pid, v_ref, speed);
      pid = r.pid;
      max_abs_error = 0.0;
      for (double e : pid.error_window) max_abs_error = std::max(max_abs_error, std::abs(e));
      EXPECT_LE(r.command.throttle, g.ki * max_abs_error + 1e-12);
      EXPECT_LE(pid.window_len(), pid.capacity);
    }
  }
}

// Frozen from tests/oracles/plant_and_step.py; asserted within 1%.
constexpr double kOriginalRise = 3.4;
constexpr double kOriginalSteady = 0.016996275312004983;
constexpr double kTunedRise = 3.2;
constexpr double kTunedSteady = 0.008433845247082239;

TEST(ControlStepResponse, MatchesClosedLoopOracle) {
  const auto original = control::step_response(control::tcp_original());
  const auto tuned = control::step_response(control::tcp_tuned());
  ASSERT_TRUE(original.rise_time && tuned.rise_time);
  EXPECT_NEAR(*original.rise_time, kOriginalRise, 0.01 * kOriginalRise);
  EXPECT_NEAR(*tuned.rise_time, kTunedRise, 0.01 * kTunedRise);
  EXPECT_NEAR(original.steady_state_error, kOriginalSteady, 0.01 * kOriginalSteady);
  EXPECT_NEAR(tuned.steady_state_error, kTunedSteady, 0.01 * kTunedSteady);
  EXPECT_EQ(original.speed.size(), control::kStepTicks);
}

TEST(ControlStepResponse, TunedRowIsNoSlowerAndNoLessAccurate) {
  const auto original = control::step_response(control::tcp_original());
  const auto tuned = control::step_response(control::tcp_tuned());
  EXPECT_LE(*tuned.rise_time, *original.rise_time);
  EXPECT_LE(tuned.steady_state_error, original.steady_state_error);
}

TEST(ControlStepResponse, UnreachableTargetHasNoRiseTime) {
  // Top speed caps well below 40 m/s at half throttle.
  const auto r = control::step_response({5.0, 0.5, 1.0, 0.5, 0.4}, 40.0);
  EXPECT_FALSE(r.rise_time);
}
