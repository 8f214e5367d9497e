#pragma once

namespace psno::dopri {

// Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner I, table 5.2),
// shared by the swing-equation integrator and the latent ODE solver.
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// 5th-order weights minus the embedded 4th-order weights.
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// Contribution weights of (y0, y1, k1, k3..k7) in the quartic dense-output
// interpolant at fraction theta of a step of size h.
struct DenseWeights {
  double y0, y1, k1, k3, k4, k5, k6, k7;
};

inline DenseWeights dense_weights(double theta, double h) {
  constexpr double d1 = -12715105075.0 / 11282082432.0;
  constexpr double d3 = 87487479700.0 / 32700410799.0;
  constexpr double d4 = -10690763975.0 / 1880347072.0;
  constexpr double d5 = 701980252875.0 / 199316789632.0;
  constexpr double d6 = -1453857185.0 / 822651844.0;
  constexpr double d7 = 69997945.0 / 29380423.0;
  const double a = theta;
  const double b1t = theta * (1.0 - theta);
  const double b2t = b1t * theta;
  const double b3t = b2t * (1.0 - theta);
  DenseWeights w{};
  w.y0 = 1.0 - a + b1t - 2.0 * b2t;
  w.y1 = a - b1t + 2.0 * b2t;
  w.k1 = h * (b1t - b2t + b3t * d1);
  w.k3 = h * b3t * d3;
  w.k4 = h * b3t * d4;
  w.k5 = h * b3t * d5;
  w.k6 = h * b3t * d6;
  w.k7 = h * (-b2t + b3t * d7);
  return w;
}

}  // namespace psno::dopri
