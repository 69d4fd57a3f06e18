#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

namespace duet {

// All musical time in this library is measured in beats (quarter note = 1.0)
// rounded to three decimal places, i.e. integer milli-beats. Arithmetic is
// done on the integer form so cumulative sums stay exact.

/// Rounds to 3 decimal places, halves away from zero.
inline double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

/// Nearest milli-beat count, halves away from zero.
inline std::int64_t to_millibeats(double beats) {
  return static_cast<std::int64_t>(std::llround(beats * 1000.0));
}

inline double from_millibeats(std::int64_t mb) {
  return static_cast<double>(mb) / 1000.0;
}

/// tick / ppq rounded to 3 decimals.
inline double ticks_to_beats(std::int64_t tick, int ppq) {
  return round3(static_cast<double>(tick) / static_cast<double>(ppq));
}

inline std::int64_t ticks_to_millibeats(std::int64_t tick, int ppq) {
  // round(tick/ppq * 1000), half away from zero, in integer arithmetic
  const std::int64_t num = tick * 1000;
  const std::int64_t q = num / ppq;
  const std::int64_t r = num % ppq;
  if (2 * std::llabs(r) >= ppq) return q + (num < 0 ? -1 : 1);
  return q;
}

/// Formats a milli-beat value with exactly three decimals, e.g. 1500 -> "1.500".
inline std::string format_millibeats(std::int64_t mb) {
  char buf[32];
  const char* sign = mb < 0 ? "-" : "";
  const std::int64_t a = std::llabs(mb);
  std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", sign,
                static_cast<long long>(a / 1000),
                static_cast<long long>(a % 1000));
  return buf;
}

struct Meter {
  int numerator = 4;
  int denominator = 4;

  /// Beats per measure in quarter-note units, as milli-beats.
  std::int64_t measure_millibeats() const {
    return static_cast<std::int64_t>(numerator) * 4000 / denominator;
  }
  double measure_beats() const { return from_millibeats(measure_millibeats()); }

  bool operator==(const Meter&) const = default;
};

}  // namespace duet
