#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "psno/datagen.hpp"
#include "psno/operators.hpp"
#include "psno/training.hpp"

namespace psno::config {

struct EvalSection {
  std::size_t runs = 20;
  std::size_t bootstrap_resamples = 10000;
  std::size_t sweep_points = 101;
  double sweep_pm = 0.4;
  double sweep_d = 0.05;
};

struct SeedSection {
  std::uint64_t data = 0;
  std::uint64_t train = 0;
  std::uint64_t bootstrap = 0;
};

// Batch run manifest: sections {sampling, model, training, evaluation,
// paths, seeds}. Unknown keys anywhere are rejected. Defaults follow the
// reference experiment setup.
struct RunConfig {
  datagen::SamplingConfig sampling;
  std::optional<operators::ModelKind> model_kind;
  nlohmann::json model_config = nlohmann::json::object();
  training::TrainConfig train;
  EvalSection eval;
  std::string out_dir = ".";
  SeedSection seeds;

  // Resolved model config for a kind (strict parse of the stored JSON).
  operators::ModelConfig resolve_model_config(operators::ModelKind kind) const {
    return operators::model_config_from_json(kind, model_config);
  }
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const nlohmann::json& j);

// PSNO_SEED environment override: replaces every seed in the config.
void apply_env_seed(RunConfig& config);

}  // namespace psno::config
