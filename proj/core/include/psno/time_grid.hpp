#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "psno/errors.hpp"

namespace psno {

// Uniform time grids are built from integer nanoseconds so that a sample
// shared by two grids (e.g. the coarse grid and a 2000x refinement of it)
// is the same double in both. All windows used here (0.2 s, 0.1 s, 50 us)
// are exact nanosecond counts.
inline std::int64_t to_nanos(double seconds) {
  const double ns = seconds * 1e9;
  const double rounded = std::round(ns);
  if (std::abs(ns - rounded) > 1e-3) throw ConfigError("time is not an integer nanosecond count");
  return static_cast<std::int64_t>(rounded);
}

inline double grid_time(std::int64_t t0_ns, std::int64_t dt_ns, std::size_t k) {
  return static_cast<double>(t0_ns + static_cast<std::int64_t>(k) * dt_ns) * 1e-9;
}

inline std::vector<double> uniform_grid(double t0, double dt, std::size_t n) {
  const std::int64_t t0_ns = to_nanos(t0), dt_ns = to_nanos(dt);
  if (dt_ns <= 0) throw ConfigError("grid spacing must be positive");
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = grid_time(t0_ns, dt_ns, k);
  return t;
}

// Number of samples covering [a, b] at spacing dt; requires dt | (b - a).
inline std::size_t grid_points(double a, double b, double dt) {
  const std::int64_t a_ns = to_nanos(a), b_ns = to_nanos(b), dt_ns = to_nanos(dt);
  if (dt_ns <= 0 || b_ns < a_ns) throw ConfigError("bad window");
  if ((b_ns - a_ns) % dt_ns != 0) throw ConfigError("grid spacing does not divide the window");
  return static_cast<std::size_t>((b_ns - a_ns) / dt_ns) + 1;
}

}  // namespace psno
