#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "psno/errors.hpp"
#include "psno/time_grid.hpp"

namespace psno::smib {

// Single machine infinite bus: one synchronous generator tied to a stiff
// source through a line reactance. All electrical quantities are per unit.
struct SmibParams {
  double E = 1.35;   // machine internal voltage
  double V = 1.0;    // infinite-bus voltage
  double X = 0.65;   // line reactance
  double H = 9.94;   // inertia constant, seconds
  double D = 0.0;    // damping, pu power per rad/s
  double f0 = 60.0;  // nominal frequency, Hz
  double Pm = 0.0;   // pre-disturbance mechanical power
  double Pm1 = 0.0;  // post-disturbance mechanical power

  void validate() const;
  SmibParams validated() const {
    validate();
    return *this;
  }
};

struct MachineState {
  double delta = 0.0;  // rotor angle, electrical rad
  double omega = 0.0;  // speed deviation d(delta)/dt, rad/s
};

enum class StabilityLabel { Stable, Unstable };

inline const char* to_string(StabilityLabel label) {
  return label == StabilityLabel::Stable ? "stable" : "unstable";
}

// Uniformly sampled rotor trajectory. Sample k lives at t0 + k*dt (built
// through the shared nanosecond grid convention).
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> delta;
  std::vector<double> omega;

  std::size_t size() const { return delta.size(); }
  double time_at(std::size_t k) const { return grid_time(to_nanos(t0), to_nanos(dt), k); }
};

// Maximum transferable electrical power |E||V|/X.
double max_power(const SmibParams& params);

// Pre-disturbance equilibrium angle asin(pm/pmax); requires 0 <= pm < pmax.
double equilibrium_angle(double pm, double pmax);

// First-order form of the swing equation with the post-disturbance input:
//   d(delta)/dt = omega
//   d(omega)/dt = (pi f0 / H) (Pm1 - D omega - pmax sin(delta))
std::array<double, 2> rhs(const MachineState& state, const SmibParams& params);

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 1e-3;
  double max_step = 0.05;
  std::size_t max_steps = 10'000'000;
};

// One accepted Dormand-Prince 5(4) step together with the stage slopes
// needed by the quartic dense-output interpolant.
struct DenseStep {
  double t = 0.0;
  double h = 0.0;
  std::array<double, 2> y0{}, y1{};
  std::array<double, 2> k1{}, k3{}, k4{}, k5{}, k6{}, k7{};
};

// Continuous solution on [t_begin, t_end]; evaluation at any time inside the
// span reads the per-step interpolant, so values do not depend on which
// other times are being queried.
class DenseSolution {
 public:
  DenseSolution(double t_begin, MachineState y_begin, std::vector<DenseStep> steps);

  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  std::size_t step_count() const { return steps_.size(); }

  MachineState at(double t) const;
  Trajectory sample(double t0, double dt, std::size_t n) const;

 private:
  double t_begin_ = 0.0, t_end_ = 0.0;
  MachineState y_begin_{};
  std::vector<DenseStep> steps_;
};

// Adaptive DoPri 5(4) solve of the swing equation from t_begin to t_end.
// The accepted-step sequence depends only on (params, initial, t_end), never
// on any output grid. Throws NumericalError on step-size underflow with the
// failure time in the message.
DenseSolution solve(const SmibParams& params, const MachineState& initial, double t_begin,
                    double t_end, const IntegratorOptions& opts = {});

// Solve and sample on an explicit uniform grid (strictly increasing).
Trajectory integrate(const SmibParams& params, const MachineState& initial,
                     const std::vector<double>& sample_times, const IntegratorOptions& opts = {});

// Nontrivial root delta_max in (pi/2, pi] of
//   (delta_max - delta0) sin(delta_max) + cos(delta_max) - cos(delta0) = 0,
// bisected to 1e-12. delta0 = pi/2 returns the degenerate boundary root.
double critical_angle(double delta0);

// Equal-area critical power pmax * sin(pi - critical_angle(delta0(Pm)));
// valid bound for the undamped machine, conservative under damping.
double pm1_max(const SmibParams& params);

// Unstable iff delta exceeds pi at any sample. Once a trajectory of this
// system crosses pi it never returns below it, so any grid containing the
// final horizon time classifies identically.
StabilityLabel classify(const Trajectory& traj);

// Thrown by instability_lower_bound when even Pm1 = pmax stays stable on the
// classification horizon; callers resample the machine parameters.
class ResampleNeeded : public std::runtime_error {
 public:
  ResampleNeeded() : std::runtime_error("resample") {}
};

struct BisectionOptions {
  std::size_t iterations = 100;
  double horizon = 3.1;       // classification horizon, seconds
  double label_dt = 1e-3;     // grid used by the stability predicate
  IntegratorOptions integrator{};
};

// 100-iteration bisection over Pm1 in [pm1_max, pmax] using integrate +
// classify as the predicate; returns the final low bracket endpoint.
double instability_lower_bound(const SmibParams& params_without_pm1,
                               const BisectionOptions& opts = {});

// Stability predicate used by the samplers and the bisection: integrates
// with the given Pm1 from the pre-disturbance equilibrium over [0, horizon]
// and classifies on the labeling grid.
StabilityLabel classify_pm1(const SmibParams& params, double pm1, const BisectionOptions& opts);

}  // namespace psno::smib
