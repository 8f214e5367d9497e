#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psno/datagen.hpp"
#include "psno/operators.hpp"
#include "psno/training.hpp"

namespace psno::evaluation {

// Root mean squared error over all trajectories, time points and channels
// (normalized units). preds[i] and targets[i] are (n, 2) tensors.
double rmse(std::span<const Tensor> preds, std::span<const Tensor> targets);

// MASE components: numerator is the mean absolute error over every target
// point and channel; the denominator is the matching mean for the
// previous-time-step baseline (whose first-point error is zero by
// construction), so the persistence predictor scores exactly 1.
struct MaseParts {
  double numerator = 0.0;
  double denominator = 0.0;
};
MaseParts mase_parts(const Tensor& pred, const Tensor& target);

// numerator / denominator with a 1e-12 floor on the denominator.
double mase(const Tensor& pred, const Tensor& target);

struct PercentDifference {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// 100 * (mean(fine) - mean(coarse)) / mean(coarse) with a paired bootstrap
// over run indices (percentile CI, deterministic in the seed).
PercentDifference percent_difference(std::span<const double> coarse_per_run,
                                     std::span<const double> fine_per_run,
                                     std::uint64_t seed = 0, std::size_t resamples = 10000);

double standard_error(std::span<const double> values);

// ---- Zero-shot super-resolution (Table 1 protocol) ----

struct SuperResRow {
  operators::ModelKind kind = operators::ModelKind::DeepONet;
  double coarse_rmse_mean = 0.0, coarse_rmse_se = 0.0;
  double fine_rmse_mean = 0.0, fine_rmse_se = 0.0;
  PercentDifference pct;
  std::vector<double> coarse_per_run, fine_per_run;
};

struct SuperResReport {
  std::vector<SuperResRow> rows;
  std::size_t runs = 0;
  std::size_t trajectories = 0;
};

// Throws ConfigError unless both datasets share seed and per-record machine
// parameters (the experiment premise).
void check_shared_params(const datagen::Dataset& a, const datagen::Dataset& b);

// RMSE of one model over a test split, querying that split's target grid.
double test_rmse(const operators::OperatorModel& model, const datagen::Dataset& test);

// Trains `runs` independently seeded models on the coarse split and
// evaluates each on the coarse and fine test sets without retraining.
struct SuperResOptions {
  std::size_t runs = 20;
  training::TrainConfig train;
  std::uint64_t bootstrap_seed = 0;
  unsigned jobs = 1;
  bool verbose = false;
};

struct SuperResResult {
  SuperResRow row;
  std::vector<operators::OperatorModel> models;
};

SuperResResult superres_experiment(operators::ModelKind kind,
                                   const operators::ModelConfig& config,
                                   const datagen::DatasetTriple& coarse,
                                   const datagen::Dataset& fine_test,
                                   const SuperResOptions& options);

// Same evaluation for pre-trained per-run models.
SuperResRow superres_evaluate(operators::ModelKind kind,
                              const std::vector<operators::OperatorModel>& models,
                              const datagen::Dataset& coarse_test,
                              const datagen::Dataset& fine_test, std::uint64_t bootstrap_seed);

// ---- Regime-generalization sweep (Figure 2 protocol) ----

struct SweepConfig {
  double pm = 0.4;
  double d = 0.05;
  std::size_t grid_points = 101;
  datagen::SamplingConfig base;  // machine constants, windows, dt
};

struct SweepReport {
  std::vector<double> pm1;
  std::vector<double> mase_mix0;   // NaN marks degenerate (near-constant) targets
  std::vector<double> mase_mix20;
  double marker_no_disturbance = 0.0;  // Pm1 = Pm
  double marker_threshold = 0.0;       // instability lower bound
};

// Mean MASE over the run checkpoints of each training mix at every Pm1.
SweepReport regime_sweep(const std::vector<operators::OperatorModel>& mix0_models,
                         const std::vector<operators::OperatorModel>& mix20_models,
                         const SweepConfig& config);

// Mean over the grid points strictly above the threshold marker, skipping
// degenerate entries.
double mean_unstable_region(const SweepReport& report, const std::vector<double>& mase);

// ---- Artifacts ----

void save_superres_csv(const SuperResReport& report, const std::string& path);
void save_sweep_csv(const SweepReport& report, const std::string& path);
void render_sweep_svg(const SweepReport& report, const std::string& path);

struct OverlayPanel {
  std::string title;
  datagen::Trajectory truth_full;   // physical, full horizon
  datagen::Trajectory input;        // physical input window
  datagen::Trajectory prediction;   // physical (denormalized) prediction
};
void render_overlay_svg(const std::vector<OverlayPanel>& panels, const std::string& path);

}  // namespace psno::evaluation
