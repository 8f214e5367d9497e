#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psno/rng.hpp"
#include "psno/smib.hpp"
#include "psno/tensor.hpp"

namespace psno::datagen {

using smib::SmibParams;
using smib::StabilityLabel;
using smib::Trajectory;

// Sampling plan for one dataset triple. Machine constants are fixed per
// instance; Pm, D and the disturbance Pm1 are drawn per record.
struct SamplingConfig {
  std::array<double, 2> pm_range{0.0, 2.0};
  std::array<double, 2> d_range{0.0, 0.135};
  double unstable_fraction = 0.0;
  double dt = 0.1;            // record sample spacing
  double input_end = 0.2;     // input window [0, tau]
  double target_start = 0.3;  // target window [target_start, target_end]
  double target_end = 3.1;    // also the classification horizon
  std::size_t n_train = 8000;
  std::size_t n_val = 1000;
  std::size_t n_test = 200;
  std::uint64_t seed = 0;

  // Machine constants (per-unit voltages/reactance, inertia, frequency).
  double E = 1.35;
  double V = 1.0;
  double X = 0.65;
  double H = 9.94;
  double f0 = 60.0;

  void validate() const;
  std::size_t input_points() const;
  std::size_t target_points() const;
};

struct TrajectoryRecord {
  SmibParams params;
  StabilityLabel label = StabilityLabel::Stable;
  Trajectory input;   // grid starts at 0
  Trajectory target;  // grid starts at target_start
};

// Channel ranges measured on the training split after clipping delta at pi.
struct NormalizationStats {
  double delta_min = 0.0;
  double delta_max = 0.0;
  double omega_absmax = 0.0;

  void validate() const;
};

enum class Split : std::uint32_t { Train = 0, Val = 1, Test = 2 };
const char* to_string(Split s);

struct Dataset {
  SamplingConfig config;
  Split split = Split::Train;
  std::optional<NormalizationStats> stats;  // absent when no training split exists
  std::vector<TrajectoryRecord> records;
};

struct DatasetTriple {
  Dataset train, val, test;
};

// One stable-regime record: Pm ~ U(pm_range), D ~ U(d_range), then
// Pm1 ~ U[0, pm1_max] under the undamped equal-area bound (conservative
// with damping, so the stability assertion cannot fire).
TrajectoryRecord sample_stable(Pcg64& rng, const SamplingConfig& config);

// One unstable-regime record: machine parameters are redrawn until Pm1 =
// pmax destabilizes, then Pm1 ~ U[bisection bound, pmax], re-drawing inside
// the interval on the rare stable draw near the approximate bound.
TrajectoryRecord sample_unstable(Pcg64& rng, const SamplingConfig& config);

// Record `index` of `split`, drawn from its own RNG stream so datasets are
// reproducible independently of generation order and resolution.
TrajectoryRecord make_record(const SamplingConfig& config, Split split, std::size_t index);

// Exactly round(unstable_fraction * n) unstable records per split (placed
// first); stats measured on the training split and copied to val/test.
DatasetTriple build_dataset(const SamplingConfig& config, unsigned jobs = 1);

NormalizationStats compute_stats(const std::vector<TrajectoryRecord>& train_records);

// (n, 2) tensor of (delta', omega'): delta clipped at pi then mapped to
// [0, 1] by the training range, omega scaled by its training max magnitude.
Tensor normalize_trajectory(const Trajectory& traj, const NormalizationStats& stats);

// Inverse map; exact for delta <= pi.
Trajectory denormalize_trajectory(const Tensor& channels, const NormalizationStats& stats,
                                  double t0, double dt);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace psno::datagen
