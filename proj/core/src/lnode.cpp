#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "model_internal.hpp"
#include "psno/dopri.hpp"
#include "psno/errors.hpp"
#include "psno/time_grid.hpp"

namespace psno::operators::detail {

namespace {

std::size_t encoder_layers(const LnodeConfig& c) { return lnode_encoder_dims(c).size() - 1; }
std::size_t dynamics_layers(const LnodeConfig& c) { return lnode_dynamics_dims(c).size() - 1; }
std::size_t decoder_layers(const LnodeConfig& c) { return lnode_decoder_dims(c).size() - 1; }

struct FixedGrid {
  double h = 0.0;
  std::size_t steps = 0;

  static FixedGrid make(const LnodeConfig& config, const TimeWindows& windows) {
    FixedGrid g;
    g.h = 1.0 / static_cast<double>(config.steps_per_unit_time);
    const std::int64_t h_ns = to_nanos(g.h);
    const std::int64_t span_ns = to_nanos(windows.target_end) - to_nanos(windows.input_end);
    g.steps = static_cast<std::size_t>((span_ns + h_ns - 1) / h_ns);
    return g;
  }

  double node_time(const TimeWindows& windows, std::size_t i) const {
    return grid_time(to_nanos(windows.input_end), to_nanos(h), i);
  }

  // Node index and interpolation weight for a query time, snapped so that
  // grid-aligned queries read the node exactly.
  std::pair<std::size_t, double> locate(const TimeWindows& windows, double t) const {
    const double pos = (t - windows.input_end) / h;
    double idx = std::floor(pos + 1e-9);
    double w = pos - idx;
    if (w < 1e-9) w = 0.0;
    if (w > 1.0 - 1e-9) {
      idx += 1.0;
      w = 0.0;
    }
    std::size_t i = static_cast<std::size_t>(std::max(idx, 0.0));
    if (i >= steps) {
      i = steps;
      w = 0.0;
    }
    return {i, w};
  }
};

constexpr double kMaxLatentStep = 0.5;
constexpr std::size_t kMaxLatentSteps = 50000;

}  // namespace

Var lnode_forward(Tape& tape, const LnodeConfig& config, const std::map<std::string, Var>& bound,
                  Var sensors, const std::vector<double>& query_times,
                  const TimeWindows& windows) {
  const Var z0 = numcore::mlp_forward(tape, bound, "encoder", encoder_layers(config), sensors,
                                      config.activation);  // (B, d)
  auto f = [&](Var z, double t) {
    const Var in = tape.append_const_col(z, windows.scale_time(t));
    return numcore::mlp_forward(tape, bound, "dynamics", dynamics_layers(config), in,
                                config.activation);
  };
  auto decode = [&](Var z) {
    return numcore::mlp_forward(tape, bound, "decoder", decoder_layers(config), z,
                                config.activation);
  };

  std::vector<Var> z_at_queries(query_times.size());

  if (config.solver == LnodeSolver::FixedAdams) {
    const FixedGrid grid = FixedGrid::make(config, windows);
    const double h = grid.h;
    std::vector<Var> states{z0};
    std::vector<Var> slopes{f(z0, grid.node_time(windows, 0))};
    states.reserve(grid.steps + 1);
    slopes.reserve(grid.steps + 1);

    // Three RK4 bootstrap steps seed the multistep history.
    const std::size_t boot = std::min<std::size_t>(3, grid.steps);
    for (std::size_t i = 0; i < boot; ++i) {
      const double t = grid.node_time(windows, i);
      const Var y = states[i];
      const Var k1 = slopes[i];
      const Var mid1 = tape.lincomb(std::vector<std::pair<double, Var>>{{1.0, y}, {h / 2, k1}});
      const Var k2 = f(mid1, t + h / 2);
      const Var mid2 = tape.lincomb(std::vector<std::pair<double, Var>>{{1.0, y}, {h / 2, k2}});
      const Var k3 = f(mid2, t + h / 2);
      const Var end = tape.lincomb(std::vector<std::pair<double, Var>>{{1.0, y}, {h, k3}});
      const Var k4 = f(end, t + h);
      const Var y1 = tape.lincomb(std::vector<std::pair<double, Var>>{
          {1.0, y}, {h / 6, k1}, {h / 3, k2}, {h / 3, k3}, {h / 6, k4}});
      states.push_back(y1);
      slopes.push_back(f(y1, grid.node_time(windows, i + 1)));
    }
    // Adams-Bashforth 4 for the remaining nodes.
    for (std::size_t i = boot; i < grid.steps; ++i) {
      const Var y1 = tape.lincomb(std::vector<std::pair<double, Var>>{
          {1.0, states[i]},
          {55.0 * h / 24.0, slopes[i]},
          {-59.0 * h / 24.0, slopes[i - 1]},
          {37.0 * h / 24.0, slopes[i - 2]},
          {-9.0 * h / 24.0, slopes[i - 3]}});
      states.push_back(y1);
      if (i + 1 < grid.steps) {
        slopes.push_back(f(y1, grid.node_time(windows, i + 1)));
      }
    }
    for (std::size_t q = 0; q < query_times.size(); ++q) {
      const auto [i, w] = grid.locate(windows, query_times[q]);
      if (w == 0.0) {
        z_at_queries[q] = states[i];
      } else {
        z_at_queries[q] = tape.lincomb(std::vector<std::pair<double, Var>>{
            {1.0 - w, states[i]}, {w, states[i + 1]}});
      }
    }
  } else {
    // Adaptive DoPri 5(4) recorded on the tape; the accepted step sequence
    // is decided from forward values and frozen for the backward pass.
    using namespace psno::dopri;
    struct StepRec {
      double t, h;
      Var y0, y1, k1, k3, k4, k5, k6, k7;
    };
    std::vector<StepRec> recs;
    const double t_end = windows.target_end;
    double t = windows.input_end;
    Var y = z0;
    Var k1 = f(y, t);
    double h = std::min(1e-2, t_end - t);
    std::size_t iter = 0;
    auto lc = [&tape](std::initializer_list<std::pair<double, Var>> terms) {
      return tape.lincomb(std::vector<std::pair<double, Var>>(terms));
    };
    while (t < t_end) {
      if (++iter > kMaxLatentSteps) {
        throw NumericalError("latent ODE exceeded the step budget at t=" + std::to_string(t));
      }
      const double h_min =
          16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
      if (h < h_min) {
        throw NumericalError("latent ODE step underflow at t=" + std::to_string(t));
      }
      if (t + h > t_end) h = t_end - t;

      const Var s2 = lc({{1.0, y}, {h * a21, k1}});
      const Var k2 = f(s2, t + c2 * h);
      const Var s3 = lc({{1.0, y}, {h * a31, k1}, {h * a32, k2}});
      const Var k3 = f(s3, t + c3 * h);
      const Var s4 = lc({{1.0, y}, {h * a41, k1}, {h * a42, k2}, {h * a43, k3}});
      const Var k4 = f(s4, t + c4 * h);
      const Var s5 = lc({{1.0, y}, {h * a51, k1}, {h * a52, k2}, {h * a53, k3}, {h * a54, k4}});
      const Var k5 = f(s5, t + c5 * h);
      const Var s6 = lc(
          {{1.0, y}, {h * a61, k1}, {h * a62, k2}, {h * a63, k3}, {h * a64, k4}, {h * a65, k5}});
      const Var k6 = f(s6, t + h);
      const Var y1 =
          lc({{1.0, y}, {h * b1, k1}, {h * b3, k3}, {h * b4, k4}, {h * b5, k5}, {h * b6, k6}});
      const Var k7 = f(y1, t + h);

      const Tensor& y0v = tape.value(y);
      const Tensor& y1v = tape.value(y1);
      const Tensor& k1v = tape.value(k1);
      const Tensor& k3v = tape.value(k3);
      const Tensor& k4v = tape.value(k4);
      const Tensor& k5v = tape.value(k5);
      const Tensor& k6v = tape.value(k6);
      const Tensor& k7v = tape.value(k7);
      double err_sq = 0.0;
      for (std::size_t i = 0; i < y0v.size(); ++i) {
        const double ei = h * (e1 * k1v[i] + e3 * k3v[i] + e4 * k4v[i] + e5 * k5v[i] +
                               e6 * k6v[i] + e7 * k7v[i]);
        const double scale =
            config.atol + config.rtol * std::max(std::abs(y0v[i]), std::abs(y1v[i]));
        err_sq += (ei / scale) * (ei / scale);
      }
      const double err = std::sqrt(err_sq / static_cast<double>(y0v.size()));
      if (!std::isfinite(err)) {
        throw NumericalError("non-finite latent state at t=" + std::to_string(t));
      }

      if (err <= 1.0 || h <= h_min * 2.0) {
        recs.push_back(StepRec{t, h, y, y1, k1, k3, k4, k5, k6, k7});
        t += h;
        y = y1;
        k1 = k7;
      }
      const double factor = err <= 0.0 ? 10.0 : 0.9 * std::pow(err, -0.2);
      h = h * std::clamp(factor, 0.2, 10.0);
      h = std::min(h, kMaxLatentStep);
    }

    for (std::size_t q = 0; q < query_times.size(); ++q) {
      const double tq = query_times[q];
      if (recs.empty() || tq <= windows.input_end) {
        z_at_queries[q] = z0;
        continue;
      }
      std::size_t lo = 0, hi = recs.size() - 1;
      while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (tq <= recs[mid].t + recs[mid].h) {
          hi = mid;
        } else {
          lo = mid + 1;
        }
      }
      const StepRec& s = recs[lo];
      const double theta = std::clamp((tq - s.t) / s.h, 0.0, 1.0);
      const DenseWeights w = dense_weights(theta, s.h);
      z_at_queries[q] = lc({{w.y0, s.y0},
                            {w.y1, s.y1},
                            {w.k1, s.k1},
                            {w.k3, s.k3},
                            {w.k4, s.k4},
                            {w.k5, s.k5},
                            {w.k6, s.k6},
                            {w.k7, s.k7}});
    }
  }

  std::vector<Var> decoded(query_times.size());
  for (std::size_t q = 0; q < query_times.size(); ++q) decoded[q] = decode(z_at_queries[q]);
  return tape.stack_rows(decoded);  // (B, n_q, 2)
}

// ---- Inference path ----

namespace {

using Vec = std::vector<double>;

// dynamics MLP on a single latent vector (appends the scaled time input).
Vec eval_dynamics(const LnodeConfig& config, const numcore::ParamSet& params, const Vec& z,
                  double t, const TimeWindows& windows) {
  Tensor in({std::size_t{1}, z.size() + 1});
  std::copy(z.begin(), z.end(), in.data());
  in[z.size()] = windows.scale_time(t);
  const Tensor out = numcore::mlp_eval(params, "dynamics", dynamics_layers(config), in,
                                       config.activation);
  return out.values();
}

Vec combine(std::initializer_list<std::pair<double, const Vec*>> terms) {
  Vec out(terms.begin()->second->size(), 0.0);
  for (const auto& [c, v] : terms) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * (*v)[i];
  }
  return out;
}

}  // namespace

Tensor lnode_predict(const LnodeConfig& config, const numcore::ParamSet& params,
                     const std::vector<double>& sensor_row,
                     const std::vector<double>& query_times, const TimeWindows& windows) {
  Tensor sens({std::size_t{1}, sensor_row.size()}, std::vector<double>(sensor_row));
  const Tensor z0t = numcore::mlp_eval(params, "encoder", encoder_layers(config), sens,
                                       config.activation);
  const Vec z0 = z0t.values();
  const std::size_t d = z0.size();
  const std::size_t n_q = query_times.size();

  Tensor z_queries({n_q, d});
  auto f = [&](const Vec& z, double t) { return eval_dynamics(config, params, z, t, windows); };

  if (config.solver == LnodeSolver::FixedAdams) {
    const FixedGrid grid = FixedGrid::make(config, windows);
    const double h = grid.h;
    std::vector<Vec> states{z0};
    std::vector<Vec> slopes{f(z0, grid.node_time(windows, 0))};
    const std::size_t boot = std::min<std::size_t>(3, grid.steps);
    for (std::size_t i = 0; i < boot; ++i) {
      const double t = grid.node_time(windows, i);
      const Vec& y = states[i];
      const Vec& k1 = slopes[i];
      const Vec k2 = f(combine({{1.0, &y}, {h / 2, &k1}}), t + h / 2);
      const Vec k3 = f(combine({{1.0, &y}, {h / 2, &k2}}), t + h / 2);
      const Vec k4 = f(combine({{1.0, &y}, {h, &k3}}), t + h);
      states.push_back(
          combine({{1.0, &y}, {h / 6, &k1}, {h / 3, &k2}, {h / 3, &k3}, {h / 6, &k4}}));
      slopes.push_back(f(states.back(), grid.node_time(windows, i + 1)));
    }
    for (std::size_t i = boot; i < grid.steps; ++i) {
      states.push_back(combine({{1.0, &states[i]},
                                {55.0 * h / 24.0, &slopes[i]},
                                {-59.0 * h / 24.0, &slopes[i - 1]},
                                {37.0 * h / 24.0, &slopes[i - 2]},
                                {-9.0 * h / 24.0, &slopes[i - 3]}}));
      if (i + 1 < grid.steps) slopes.push_back(f(states.back(), grid.node_time(windows, i + 1)));
    }
    for (std::size_t q = 0; q < n_q; ++q) {
      const auto [i, w] = grid.locate(windows, query_times[q]);
      for (std::size_t c = 0; c < d; ++c) {
        z_queries.at2(q, c) =
            w == 0.0 ? states[i][c] : (1.0 - w) * states[i][c] + w * states[i + 1][c];
      }
    }
  } else {
    using namespace psno::dopri;
    struct StepRec {
      double t, h;
      Vec y0, y1, k1, k3, k4, k5, k6, k7;
    };
    std::vector<StepRec> recs;
    const double t_end = windows.target_end;
    double t = windows.input_end;
    Vec y = z0;
    Vec k1 = f(y, t);
    double h = std::min(1e-2, t_end - t);
    std::size_t iter = 0;
    while (t < t_end) {
      if (++iter > kMaxLatentSteps) {
        throw NumericalError("latent ODE exceeded the step budget at t=" + std::to_string(t));
      }
      const double h_min =
          16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
      if (h < h_min) {
        throw NumericalError("latent ODE step underflow at t=" + std::to_string(t));
      }
      if (t + h > t_end) h = t_end - t;

      const Vec k2 = f(combine({{1.0, &y}, {h * a21, &k1}}), t + c2 * h);
      const Vec k3 = f(combine({{1.0, &y}, {h * a31, &k1}, {h * a32, &k2}}), t + c3 * h);
      const Vec k4 =
          f(combine({{1.0, &y}, {h * a41, &k1}, {h * a42, &k2}, {h * a43, &k3}}), t + c4 * h);
      const Vec k5 = f(
          combine({{1.0, &y}, {h * a51, &k1}, {h * a52, &k2}, {h * a53, &k3}, {h * a54, &k4}}),
          t + c5 * h);
      const Vec k6 = f(combine({{1.0, &y},
                                {h * a61, &k1},
                                {h * a62, &k2},
                                {h * a63, &k3},
                                {h * a64, &k4},
                                {h * a65, &k5}}),
                       t + h);
      const Vec y1 = combine(
          {{1.0, &y}, {h * b1, &k1}, {h * b3, &k3}, {h * b4, &k4}, {h * b5, &k5}, {h * b6, &k6}});
      const Vec k7 = f(y1, t + h);

      double err_sq = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                               e7 * k7[i]);
        const double scale = config.atol + config.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
        err_sq += (ei / scale) * (ei / scale);
      }
      const double err = std::sqrt(err_sq / static_cast<double>(y.size()));
      if (!std::isfinite(err)) {
        throw NumericalError("non-finite latent state at t=" + std::to_string(t));
      }
      if (err <= 1.0 || h <= h_min * 2.0) {
        recs.push_back(StepRec{t, h, y, y1, k1, k3, k4, k5, k6, k7});
        t += h;
        y = y1;
        k1 = k7;
      }
      const double factor = err <= 0.0 ? 10.0 : 0.9 * std::pow(err, -0.2);
      h = h * std::clamp(factor, 0.2, 10.0);
      h = std::min(h, kMaxLatentStep);
    }

    for (std::size_t q = 0; q < n_q; ++q) {
      const double tq = query_times[q];
      if (recs.empty() || tq <= windows.input_end) {
        for (std::size_t c = 0; c < d; ++c) z_queries.at2(q, c) = z0[c];
        continue;
      }
      std::size_t lo = 0, hi = recs.size() - 1;
      while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (tq <= recs[mid].t + recs[mid].h) {
          hi = mid;
        } else {
          lo = mid + 1;
        }
      }
      const StepRec& s = recs[lo];
      const double theta = std::clamp((tq - s.t) / s.h, 0.0, 1.0);
      const DenseWeights w = dense_weights(theta, s.h);
      for (std::size_t c = 0; c < d; ++c) {
        z_queries.at2(q, c) = w.y0 * s.y0[c] + w.y1 * s.y1[c] + w.k1 * s.k1[c] + w.k3 * s.k3[c] +
                              w.k4 * s.k4[c] + w.k5 * s.k5[c] + w.k6 * s.k6[c] + w.k7 * s.k7[c];
      }
    }
  }

  // Decode every query state in one pass.
  return numcore::mlp_eval(params, "decoder", decoder_layers(config), z_queries,
                           config.activation);
}

}  // namespace psno::operators::detail
