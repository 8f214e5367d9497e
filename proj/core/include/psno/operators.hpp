#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psno/datagen.hpp"
#include "psno/nn.hpp"

namespace psno::operators {

using numcore::Activation;
using numcore::ParamSet;
using numcore::Tape;
using numcore::Var;

enum class ModelKind { DeepONet, Fno, LnodeFixed, LnodeAdaptive };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Branch consumes the input window sampled at fixed sensor times (2 channels
// per sensor), the trunk consumes the scaled query time; predictions are
// their inner product per output channel.
struct DeepONetConfig {
  std::vector<double> sensor_times{0.0, 0.1, 0.2};
  std::vector<std::size_t> branch_hidden{512, 512};
  std::vector<std::size_t> trunk_hidden{512, 512};
  std::size_t basis_size = 128;
  Activation activation = Activation::Tanh;
};

// Lift to `width` channels, `layers` spectral blocks (truncated Fourier
// multiply + pointwise bypass), pointwise projection back to 2 channels.
struct FnoConfig {
  std::size_t width = 80;
  std::size_t layers = 4;
  std::size_t modes = 14;
  std::size_t projection_hidden = 128;
  Activation activation = Activation::Gelu;
};

enum class LnodeSolver { FixedAdams, AdaptiveDopri };

// Encoder maps sensor values to a latent state at the input-window end;
// learned dynamics evolve it across the target window; decoder reads out the
// two channels at query times.
struct LnodeConfig {
  std::vector<double> sensor_times{0.0, 0.1, 0.2};
  std::vector<std::size_t> encoder_hidden{800, 800};
  std::size_t latent_dim = 64;
  std::vector<std::size_t> dynamics_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{96, 96};
  LnodeSolver solver = LnodeSolver::FixedAdams;
  std::size_t steps_per_unit_time = 100;
  double rtol = 1e-6;
  double atol = 1e-8;
  Activation activation = Activation::Tanh;
};

using ModelConfig = std::variant<DeepONetConfig, FnoConfig, LnodeConfig>;

ModelConfig default_config(ModelKind kind);

// Time windows shared by data generation and the models: query times are
// scaled as s(t) = (t - target_start) / (target_end - target_start).
struct TimeWindows {
  double input_end = 0.2;
  double target_start = 0.3;
  double target_end = 3.1;

  double scale_time(double t) const {
    return (t - target_start) / (target_end - target_start);
  }
};

// A surrogate operator: predicts the normalized future trajectory at
// arbitrary query times inside the target window from the normalized input
// window. Immutable once trained; predict is pure.
struct OperatorModel {
  ModelKind kind = ModelKind::DeepONet;
  ModelConfig config;
  ParamSet params;
  datagen::NormalizationStats norm_stats;
  TimeWindows windows;
  std::uint64_t seed = 0;
  std::map<std::string, double> metadata;  // training provenance (best epoch, losses)

  // norm_input: (n, 2) normalized input window on a uniform grid starting at
  // t0 with spacing dt. Returns (|query_times|, 2) normalized predictions.
  Tensor predict_normalized(const Tensor& norm_input, double t0, double dt,
                            const std::vector<double>& query_times) const;

  // Batch form; shares work across records where the architecture allows
  // (the DeepONet trunk is evaluated once per call).
  std::vector<Tensor> predict_many(const std::vector<Tensor>& norm_inputs, double t0, double dt,
                                   const std::vector<double>& query_times) const;

  // Convenience wrapper: physical input trajectory, normalized inside.
  Tensor predict(const datagen::Trajectory& input,
                 const std::vector<double>& query_times) const;
};

// Parameter plan and exact scalar count for a configuration.
std::vector<numcore::ParamSpec> param_specs(ModelKind kind, const ModelConfig& config);
std::size_t count_params(ModelKind kind, const ModelConfig& config);

// Fresh model with Glorot/spectral initialization, deterministic in seed.
OperatorModel make_model(ModelKind kind, const ModelConfig& config,
                         const datagen::NormalizationStats& stats, std::uint64_t seed,
                         const TimeWindows& windows = {});

// ---- Input assembly shared by training and inference ----

// Linear interpolation of each channel of an (n, 2) window at time t
// (clamped to the window).
std::array<double, 2> interp_channels(const Tensor& window, double t0, double dt, double t);

// Sensor vector [delta(s_0), omega(s_0), delta(s_1), ...] of length 2S.
std::vector<double> sensor_vector(const Tensor& norm_input, double t0, double dt,
                                  const std::vector<double>& sensor_times);

// FNO input signal (n_q, 3): the input window stretched over a length-n_q
// uniform parameterization of [0, input_end] plus the scaled query time.
Tensor fno_input_signal(const Tensor& norm_input, double t0, double dt,
                        const std::vector<double>& query_times, const TimeWindows& windows);

// ---- Tape forwards (training path) ----

// Binds every parameter as a gradient leaf; returns name -> Var.
std::map<std::string, Var> bind_params(Tape& tape, const ParamSet& params, bool requires_grad);

// Batched forward pass on the tape. `batch_inputs` is (B, 2S) sensor rows
// for DeepONet/LNODE or (B, n_q, 3) signals for FNO. Returns (B, n_q, 2).
Var model_forward(Tape& tape, const OperatorModel& model,
                  const std::map<std::string, Var>& bound, const Tensor& batch_inputs,
                  const std::vector<double>& query_times);

// Model-kind specific batch input assembly from per-record normalized
// input windows.
Tensor batch_inputs_for(const OperatorModel& model, const std::vector<Tensor>& norm_inputs,
                        const std::vector<std::size_t>& indices, double t0, double dt,
                        const std::vector<double>& query_times);

// ---- Checkpoints ----

void save_checkpoint(const OperatorModel& model, const std::string& path);
OperatorModel load_checkpoint(const std::string& path);

// Model config <-> JSON; parsing rejects unknown keys.
ModelConfig model_config_from_json(ModelKind kind, const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& config);

}  // namespace psno::operators
