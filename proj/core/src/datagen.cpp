#include "psno/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "psno/errors.hpp"
#include "psno/parallel.hpp"
#include "psno/time_grid.hpp"

namespace psno::datagen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMaxResamples = 1000;

SmibParams machine_of(const SamplingConfig& config) {
  SmibParams p;
  p.E = config.E;
  p.V = config.V;
  p.X = config.X;
  p.H = config.H;
  p.f0 = config.f0;
  return p;
}

smib::BisectionOptions bisection_options(const SamplingConfig& config) {
  smib::BisectionOptions opts;
  opts.horizon = config.target_end;
  return opts;
}

// Full-horizon solve from the pre-disturbance equilibrium, sliced into the
// record windows. The label comes from the fixed labeling grid, which the
// record's own grid provably agrees with (a trajectory never returns below
// pi once past it, and the horizon endpoint is a sample of every grid).
TrajectoryRecord finish_record(const SamplingConfig& config, const SmibParams& params) {
  const double delta0 = smib::equilibrium_angle(params.Pm, smib::max_power(params));
  const smib::DenseSolution sol =
      smib::solve(params, smib::MachineState{delta0, 0.0}, 0.0, config.target_end);

  const smib::BisectionOptions label_opts = bisection_options(config);
  const std::size_t label_n = grid_points(0.0, config.target_end, label_opts.label_dt);
  const StabilityLabel label = smib::classify(sol.sample(0.0, label_opts.label_dt, label_n));

  TrajectoryRecord record;
  record.params = params;
  record.label = label;
  record.input = sol.sample(0.0, config.dt, config.input_points());
  record.target = sol.sample(config.target_start, config.dt, config.target_points());
  return record;
}

}  // namespace

void SamplingConfig::validate() const {
  if (!(pm_range[0] < pm_range[1]) || !(d_range[0] <= d_range[1])) {
    throw ConfigError("sampling intervals must be nonempty");
  }
  if (!(d_range[0] >= 0.0)) throw ConfigError("damping range must be nonnegative");
  if (!(unstable_fraction >= 0.0 && unstable_fraction <= 1.0)) {
    throw ConfigError("unstable_fraction must lie in [0, 1]");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(input_end > 0.0) || !(target_start > input_end) || !(target_end > target_start)) {
    throw ConfigError("windows must be ordered 0 < tau < target_start < target_end");
  }
  // Throws unless dt divides both windows (nanosecond grid convention).
  (void)grid_points(0.0, input_end, dt);
  (void)grid_points(target_start, target_end, dt);
  SmibParams machine = machine_of(*this);
  machine.Pm = pm_range[0];
  machine.validate();
  const double pmax = smib::max_power(machine);
  if (!(pm_range[1] <= pmax)) {
    throw ConfigError("pm_range must stay below the maximum transferable power");
  }
}

std::size_t SamplingConfig::input_points() const { return grid_points(0.0, input_end, dt); }

std::size_t SamplingConfig::target_points() const {
  return grid_points(target_start, target_end, dt);
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

TrajectoryRecord sample_stable(Pcg64& rng, const SamplingConfig& config) {
  SmibParams params = machine_of(config);
  params.Pm = rng.uniform(config.pm_range[0], config.pm_range[1]);
  params.D = rng.uniform(config.d_range[0], config.d_range[1]);

  SmibParams undamped = params;
  undamped.D = 0.0;
  const double bound = smib::pm1_max(undamped);
  params.Pm1 = rng.uniform(0.0, bound);

  TrajectoryRecord record = finish_record(config, params);
  if (record.label != StabilityLabel::Stable) {
    throw NumericalError("stable sample classified unstable; equal-area bound violated");
  }
  return record;
}

TrajectoryRecord sample_unstable(Pcg64& rng, const SamplingConfig& config) {
  const smib::BisectionOptions opts = bisection_options(config);
  for (std::size_t attempt = 0; attempt < kMaxResamples; ++attempt) {
    SmibParams params = machine_of(config);
    params.Pm = rng.uniform(config.pm_range[0], config.pm_range[1]);
    params.D = rng.uniform(config.d_range[0], config.d_range[1]);

    double bound = 0.0;
    try {
      bound = smib::instability_lower_bound(params, opts);
    } catch (const smib::ResampleNeeded&) {
      continue;  // even pmax stays stable on this horizon: redraw machine
    }
    const double pmax = smib::max_power(params);
    for (std::size_t draw = 0; draw < kMaxResamples; ++draw) {
      params.Pm1 = rng.uniform(bound, pmax);
      TrajectoryRecord record = finish_record(config, params);
      if (record.label == StabilityLabel::Unstable) return record;
      // The bisection bound is approximate: a draw right at the boundary can
      // stay stable; redraw inside the interval.
    }
    throw ConfigError("could not draw an unstable Pm1 within the bisection interval");
  }
  throw ConfigError("exceeded 1000 parameter resamples while searching for instability");
}

TrajectoryRecord make_record(const SamplingConfig& config, Split split, std::size_t index) {
  const std::size_t n = split == Split::Train   ? config.n_train
                        : split == Split::Val   ? config.n_val
                                                : config.n_test;
  if (index >= n) throw ConfigError("record index out of range");
  const std::size_t n_unstable =
      static_cast<std::size_t>(std::llround(config.unstable_fraction * static_cast<double>(n)));
  Pcg64 rng(config.seed, record_stream(static_cast<std::uint32_t>(split), index));
  return index < n_unstable ? sample_unstable(rng, config) : sample_stable(rng, config);
}

namespace {

Dataset build_split(const SamplingConfig& config, Split split, unsigned jobs) {
  const std::size_t n = split == Split::Train   ? config.n_train
                        : split == Split::Val   ? config.n_val
                                                : config.n_test;
  Dataset ds;
  ds.config = config;
  ds.split = split;
  ds.records.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) { ds.records[i] = make_record(config, split, i); });
  return ds;
}

}  // namespace

DatasetTriple build_dataset(const SamplingConfig& config, unsigned jobs) {
  config.validate();
  DatasetTriple triple;
  triple.train = build_split(config, Split::Train, jobs);
  triple.val = build_split(config, Split::Val, jobs);
  triple.test = build_split(config, Split::Test, jobs);
  if (!triple.train.records.empty()) {
    const NormalizationStats stats = compute_stats(triple.train.records);
    triple.train.stats = stats;
    triple.val.stats = stats;
    triple.test.stats = stats;
  }
  return triple;
}

void NormalizationStats::validate() const {
  if (!(delta_min < delta_max)) throw NumericalError("degenerate delta range in stats");
  if (!(omega_absmax > 0.0)) throw NumericalError("degenerate omega range in stats");
}

NormalizationStats compute_stats(const std::vector<TrajectoryRecord>& train_records) {
  if (train_records.empty()) throw ConfigError("stats need a nonempty training split");
  NormalizationStats stats;
  stats.delta_min = std::numeric_limits<double>::infinity();
  stats.delta_max = -std::numeric_limits<double>::infinity();
  stats.omega_absmax = 0.0;
  auto fold = [&stats](const Trajectory& traj) {
    for (double d : traj.delta) {
      const double clipped = std::min(d, kPi);
      stats.delta_min = std::min(stats.delta_min, clipped);
      stats.delta_max = std::max(stats.delta_max, clipped);
    }
    for (double w : traj.omega) stats.omega_absmax = std::max(stats.omega_absmax, std::abs(w));
  };
  for (const TrajectoryRecord& record : train_records) {
    fold(record.input);
    fold(record.target);
  }
  stats.validate();
  return stats;
}

Tensor normalize_trajectory(const Trajectory& traj, const NormalizationStats& stats) {
  stats.validate();
  const double range = stats.delta_max - stats.delta_min;
  Tensor out({traj.size(), 2});
  for (std::size_t j = 0; j < traj.size(); ++j) {
    out.at2(j, 0) = (std::min(traj.delta[j], kPi) - stats.delta_min) / range;
    out.at2(j, 1) = traj.omega[j] / stats.omega_absmax;
  }
  return out;
}

Trajectory denormalize_trajectory(const Tensor& channels, const NormalizationStats& stats,
                                  double t0, double dt) {
  stats.validate();
  if (channels.rank() != 2 || channels.dim(1) != 2) {
    throw ConfigError("denormalize expects an (n, 2) tensor");
  }
  const double range = stats.delta_max - stats.delta_min;
  Trajectory traj;
  traj.t0 = t0;
  traj.dt = dt;
  traj.delta.resize(channels.dim(0));
  traj.omega.resize(channels.dim(0));
  for (std::size_t j = 0; j < channels.dim(0); ++j) {
    traj.delta[j] = channels.at2(j, 0) * range + stats.delta_min;
    traj.omega[j] = channels.at2(j, 1) * stats.omega_absmax;
  }
  return traj;
}

}  // namespace psno::datagen
