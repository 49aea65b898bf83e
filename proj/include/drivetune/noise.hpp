#pragma once

// Counter-based noise: every sample is a pure function of its key, so runs can
// be executed in any order or in parallel without sequencing a generator.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace drivetune::noise {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Uniform in [0, 1) with 53 bits of resolution.
inline constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Independent noise streams within one tick.
enum class Stream : std::uint64_t {
  SpeedMeasurement = 1,
  WaypointArc = 2,
  WaypointLateral = 3,
};

/// Standard normal sample for (seed, scenario, repetition, tick, stream, lane).
/// Box-Muller over two sub-keys.
inline double standard_normal(std::uint64_t seed, std::uint64_t scenario, std::uint64_t repetition,
                              std::uint64_t tick, Stream stream, std::uint64_t lane = 0) {
  const auto s = static_cast<std::uint64_t>(stream);
  const std::uint64_t base = hash_key({seed, scenario, repetition, tick, s, lane});
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - to_unit(splitmix64(base ^ 0x1ULL));
  const double u2 = to_unit(splitmix64(base ^ 0x2ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace drivetune::noise
