#include "psno/smib.hpp"

#include "psno/dopri.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace psno::smib {

namespace {

constexpr double kPi = std::numbers::pi;
using namespace psno::dopri;

}  // namespace

void SmibParams::validate() const {
  if (!(E > 0.0) || !(V > 0.0) || !(X > 0.0)) throw ConfigError("E, V, X must be positive");
  if (!(H > 0.0)) throw ConfigError("inertia constant H must be positive");
  if (!(f0 > 0.0)) throw ConfigError("nominal frequency f0 must be positive");
  if (!(D >= 0.0)) throw ConfigError("damping D must be nonnegative");
  const double pmax = E * V / X;
  if (!(Pm < pmax)) throw ConfigError("Pm must be below the maximum transferable power E*V/X");
  if (!(Pm >= 0.0)) throw ConfigError("Pm must be nonnegative");
}

double max_power(const SmibParams& params) { return std::abs(params.E) * std::abs(params.V) / params.X; }

double equilibrium_angle(double pm, double pmax) {
  if (!(pm >= 0.0) || !(pm < pmax)) {
    throw ConfigError("equilibrium angle requires 0 <= pm < pmax");
  }
  return std::asin(pm / pmax);
}

std::array<double, 2> rhs(const MachineState& state, const SmibParams& params) {
  const double accel = kPi * params.f0 / params.H *
                       (params.Pm1 - params.D * state.omega -
                        max_power(params) * std::sin(state.delta));
  return {state.omega, accel};
}

DenseSolution::DenseSolution(double t_begin, MachineState y_begin, std::vector<DenseStep> steps)
    : t_begin_(t_begin), y_begin_(y_begin), steps_(std::move(steps)) {
  t_end_ = steps_.empty() ? t_begin_ : steps_.back().t + steps_.back().h;
}

MachineState DenseSolution::at(double t) const {
  if (steps_.empty() || t <= t_begin_) return y_begin_;
  // Binary search for the step containing t.
  std::size_t lo = 0, hi = steps_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (t <= steps_[mid].t + steps_[mid].h) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const DenseStep& s = steps_[lo];
  const double theta = std::clamp((t - s.t) / s.h, 0.0, 1.0);
  const DenseWeights w = dense_weights(theta, s.h);
  MachineState out;
  out.delta = w.y0 * s.y0[0] + w.y1 * s.y1[0] + w.k1 * s.k1[0] + w.k3 * s.k3[0] +
              w.k4 * s.k4[0] + w.k5 * s.k5[0] + w.k6 * s.k6[0] + w.k7 * s.k7[0];
  out.omega = w.y0 * s.y0[1] + w.y1 * s.y1[1] + w.k1 * s.k1[1] + w.k3 * s.k3[1] +
              w.k4 * s.k4[1] + w.k5 * s.k5[1] + w.k6 * s.k6[1] + w.k7 * s.k7[1];
  return out;
}

Trajectory DenseSolution::sample(double t0, double dt, std::size_t n) const {
  Trajectory traj;
  traj.t0 = t0;
  traj.dt = dt;
  traj.delta.resize(n);
  traj.omega.resize(n);
  const std::int64_t t0_ns = to_nanos(t0), dt_ns = to_nanos(dt);
  for (std::size_t k = 0; k < n; ++k) {
    const MachineState y = at(grid_time(t0_ns, dt_ns, k));
    traj.delta[k] = y.delta;
    traj.omega[k] = y.omega;
  }
  return traj;
}

DenseSolution solve(const SmibParams& params, const MachineState& initial, double t_begin,
                    double t_end, const IntegratorOptions& opts) {
  params.validate();
  if (!(t_end >= t_begin)) throw ConfigError("integration span must be forward in time");
  if (!std::isfinite(initial.delta) || !std::isfinite(initial.omega)) {
    throw NumericalError("non-finite initial state");
  }

  std::vector<DenseStep> steps;
  std::array<double, 2> y{initial.delta, initial.omega};
  double t = t_begin;
  auto f = [&params](double, const std::array<double, 2>& s) {
    return rhs(MachineState{s[0], s[1]}, params);
  };

  std::array<double, 2> k1 = f(t, y);
  double h = std::min(opts.initial_step, opts.max_step);
  const double span = t_end - t_begin;
  if (span == 0.0) return DenseSolution(t_begin, initial, {});
  h = std::min(h, span);

  std::size_t n_steps = 0;
  while (t < t_end) {
    if (++n_steps > opts.max_steps) {
      throw NumericalError("integration exceeded the step budget at t=" + std::to_string(t));
    }
    const double h_min = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
    if (h < h_min) {
      throw NumericalError("integration step underflow (stiffness guard) at t=" + std::to_string(t));
    }
    if (t + h > t_end) h = t_end - t;

    std::array<double, 2> y2{}, y3{}, y4{}, y5{}, y6{}, y1n{};
    for (int i = 0; i < 2; ++i) y2[i] = y[i] + h * a21 * k1[i];
    const auto k2 = f(t + c2 * h, y2);
    for (int i = 0; i < 2; ++i) y3[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    const auto k3 = f(t + c3 * h, y3);
    for (int i = 0; i < 2; ++i) y4[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    const auto k4 = f(t + c4 * h, y4);
    for (int i = 0; i < 2; ++i) {
      y5[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    const auto k5 = f(t + c5 * h, y5);
    for (int i = 0; i < 2; ++i) {
      y6[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    const auto k6 = f(t + h, y6);
    for (int i = 0; i < 2; ++i) {
      y1n[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    }
    const auto k7 = f(t + h, y1n);  // FSAL

    double err_sq = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                             e7 * k7[i]);
      const double scale = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(y1n[i]));
      err_sq += (ei / scale) * (ei / scale);
    }
    const double err = std::sqrt(err_sq / 2.0);

    if (err <= 1.0 || h <= h_min * 2.0) {
      DenseStep step;
      step.t = t;
      step.h = h;
      step.y0 = y;
      step.y1 = y1n;
      step.k1 = k1;
      step.k3 = k3;
      step.k4 = k4;
      step.k5 = k5;
      step.k6 = k6;
      step.k7 = k7;
      steps.push_back(step);
      t += h;
      y = y1n;
      k1 = k7;
    }
    const double factor = err <= 0.0 ? 10.0 : 0.9 * std::pow(err, -0.2);
    h = h * std::clamp(factor, 0.2, 10.0);
    h = std::min(h, opts.max_step);
    if (!std::isfinite(h) || !std::isfinite(y[0]) || !std::isfinite(y[1])) {
      throw NumericalError("non-finite state during integration at t=" + std::to_string(t));
    }
  }
  return DenseSolution(t_begin, initial, std::move(steps));
}

Trajectory integrate(const SmibParams& params, const MachineState& initial,
                     const std::vector<double>& sample_times, const IntegratorOptions& opts) {
  if (sample_times.empty()) throw ConfigError("sample grid is empty");
  for (std::size_t k = 1; k < sample_times.size(); ++k) {
    if (!(sample_times[k] > sample_times[k - 1])) {
      throw ConfigError("sample grid must be strictly increasing");
    }
  }
  const double t0 = sample_times.front();
  const double dt = sample_times.size() > 1 ? sample_times[1] - sample_times[0] : 1.0;
  const DenseSolution sol = solve(params, initial, t0, sample_times.back(), opts);
  Trajectory traj;
  traj.t0 = t0;
  traj.dt = dt;
  traj.delta.resize(sample_times.size());
  traj.omega.resize(sample_times.size());
  for (std::size_t k = 0; k < sample_times.size(); ++k) {
    const MachineState y = sol.at(sample_times[k]);
    traj.delta[k] = y.delta;
    traj.omega[k] = y.omega;
  }
  return traj;
}

double critical_angle(double delta0) {
  if (!(delta0 >= 0.0) || !(delta0 <= kPi / 2.0)) {
    throw ConfigError("critical angle requires delta0 in [0, pi/2]");
  }
  if (delta0 == kPi / 2.0) return kPi / 2.0;
  const auto residual = [delta0](double dmax) {
    return (dmax - delta0) * std::sin(dmax) + std::cos(dmax) - std::cos(delta0);
  };
  // residual > 0 at pi/2 (for delta0 < pi/2) and < 0 at pi; exactly one
  // root in between.
  double lo = kPi / 2.0, hi = kPi;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (residual(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double pm1_max(const SmibParams& params) {
  const double pmax = max_power(params);
  const double delta0 = equilibrium_angle(params.Pm, pmax);
  const double dmax = critical_angle(delta0);
  return pmax * std::sin(kPi - dmax);
}

StabilityLabel classify(const Trajectory& traj) {
  if (traj.delta.empty()) throw ConfigError("cannot classify an empty trajectory");
  for (double d : traj.delta) {
    if (d > kPi) return StabilityLabel::Unstable;
  }
  return StabilityLabel::Stable;
}

StabilityLabel classify_pm1(const SmibParams& params, double pm1, const BisectionOptions& opts) {
  SmibParams p = params;
  p.Pm1 = pm1;
  const double delta0 = equilibrium_angle(p.Pm, max_power(p));
  const DenseSolution sol = solve(p, MachineState{delta0, 0.0}, 0.0, opts.horizon, opts.integrator);
  const std::size_t n = grid_points(0.0, opts.horizon, opts.label_dt);
  return classify(sol.sample(0.0, opts.label_dt, n));
}

double instability_lower_bound(const SmibParams& params_without_pm1, const BisectionOptions& opts) {
  const SmibParams& params = params_without_pm1;
  params.validate();
  const double pmax = max_power(params);
  SmibParams undamped = params;
  undamped.D = 0.0;
  double lo = pm1_max(undamped);
  double hi = pmax;
  if (hi - lo <= 1e-12) return pmax;

  if (classify_pm1(params, pmax, opts) == StabilityLabel::Stable) throw ResampleNeeded();

  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    // Once the bracket collapses to adjacent doubles the midpoint equals an
    // endpoint and no further iteration can move `lo`.
    if (mid <= lo || mid >= hi) break;
    if (classify_pm1(params, mid, opts) == StabilityLabel::Unstable) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;
}

}  // namespace psno::smib
