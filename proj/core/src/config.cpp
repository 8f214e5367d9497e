#include "psno/config.hpp"

#include <cstdlib>
#include <fstream>

#include "psno/errors.hpp"

namespace psno::config {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* name : allowed) {
      if (key == name) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_sampling(const json& j, datagen::SamplingConfig& c) {
  reject_unknown(j,
                 {"pm_range", "d_range", "unstable_fraction", "dt", "input_end", "target_start",
                  "target_end", "n_train", "n_val", "n_test", "seed", "E", "V", "X", "H", "f0"},
                 "sampling");
  if (j.contains("pm_range")) {
    c.pm_range = {j["pm_range"].at(0).get<double>(), j["pm_range"].at(1).get<double>()};
  }
  if (j.contains("d_range")) {
    c.d_range = {j["d_range"].at(0).get<double>(), j["d_range"].at(1).get<double>()};
  }
  read(j, "unstable_fraction", c.unstable_fraction);
  read(j, "dt", c.dt);
  read(j, "input_end", c.input_end);
  read(j, "target_start", c.target_start);
  read(j, "target_end", c.target_end);
  read(j, "n_train", c.n_train);
  read(j, "n_val", c.n_val);
  read(j, "n_test", c.n_test);
  read(j, "seed", c.seed);
  read(j, "E", c.E);
  read(j, "V", c.V);
  read(j, "X", c.X);
  read(j, "H", c.H);
  read(j, "f0", c.f0);
}

void parse_training(const json& j, training::TrainConfig& c) {
  reject_unknown(j, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "verbose"},
                 "training");
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.adam.lr);
  read(j, "beta1", c.adam.beta1);
  read(j, "beta2", c.adam.beta2);
  read(j, "eps", c.adam.eps);
  read(j, "verbose", c.verbose);
}

void parse_eval(const json& j, EvalSection& c) {
  reject_unknown(j, {"runs", "bootstrap_resamples", "sweep_points", "sweep_pm", "sweep_d"},
                 "evaluation");
  read(j, "runs", c.runs);
  read(j, "bootstrap_resamples", c.bootstrap_resamples);
  read(j, "sweep_points", c.sweep_points);
  read(j, "sweep_pm", c.sweep_pm);
  read(j, "sweep_d", c.sweep_d);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  reject_unknown(j, {"sampling", "model", "training", "evaluation", "paths", "seeds"},
                 "run config");
  RunConfig config;
  if (j.contains("sampling")) parse_sampling(j["sampling"], config.sampling);
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, {"kind", "config"}, "model");
    if (m.contains("kind")) {
      config.model_kind = operators::model_kind_from_string(m["kind"].get<std::string>());
    }
    if (m.contains("config")) {
      config.model_config = m["config"];
      if (config.model_kind) {
        // Validates the keys against the chosen architecture now.
        (void)operators::model_config_from_json(*config.model_kind, config.model_config);
      }
    }
  }
  if (j.contains("training")) parse_training(j["training"], config.train);
  if (j.contains("evaluation")) parse_eval(j["evaluation"], config.eval);
  if (j.contains("paths")) {
    reject_unknown(j["paths"], {"out_dir"}, "paths");
    read(j["paths"], "out_dir", config.out_dir);
  }
  config.seeds.data = config.sampling.seed;
  if (j.contains("seeds")) {
    reject_unknown(j["seeds"], {"data", "train", "bootstrap"}, "seeds");
    read(j["seeds"], "data", config.seeds.data);
    read(j["seeds"], "train", config.seeds.train);
    read(j["seeds"], "bootstrap", config.seeds.bootstrap);
  }
  config.sampling.seed = config.seeds.data;
  config.train.seed = config.seeds.train;
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

void apply_env_seed(RunConfig& config) {
  const char* env = std::getenv("PSNO_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long seed = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') throw ConfigError("PSNO_SEED must be an unsigned integer");
  config.seeds.data = seed;
  config.seeds.train = seed;
  config.seeds.bootstrap = seed;
  config.sampling.seed = seed;
  config.train.seed = seed;
}

}  // namespace psno::config
