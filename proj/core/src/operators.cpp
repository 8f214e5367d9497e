#include "psno/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "model_internal.hpp"
#include "psno/errors.hpp"

namespace psno::operators {

using nlohmann::json;

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::DeepONet: return "deeponet";
    case ModelKind::Fno: return "fno";
    case ModelKind::LnodeFixed: return "lnode-fixed";
    case ModelKind::LnodeAdaptive: return "lnode-adaptive";
  }
  return "deeponet";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "deeponet") return ModelKind::DeepONet;
  if (s == "fno") return ModelKind::Fno;
  if (s == "lnode-fixed") return ModelKind::LnodeFixed;
  if (s == "lnode-adaptive") return ModelKind::LnodeAdaptive;
  throw ConfigError("unknown model kind: " + s);
}

ModelConfig default_config(ModelKind kind) {
  switch (kind) {
    case ModelKind::DeepONet: return DeepONetConfig{};
    case ModelKind::Fno: return FnoConfig{};
    case ModelKind::LnodeFixed: {
      LnodeConfig c;
      c.solver = LnodeSolver::FixedAdams;
      return c;
    }
    case ModelKind::LnodeAdaptive: {
      LnodeConfig c;
      c.solver = LnodeSolver::AdaptiveDopri;
      return c;
    }
  }
  return DeepONetConfig{};
}

std::vector<numcore::ParamSpec> param_specs(ModelKind kind, const ModelConfig& config) {
  using numcore::ParamSpec;
  std::vector<ParamSpec> specs;
  switch (kind) {
    case ModelKind::DeepONet: {
      const auto& c = std::get<DeepONetConfig>(config);
      numcore::add_mlp_specs(specs, "branch", detail::deeponet_branch_dims(c));
      numcore::add_mlp_specs(specs, "trunk", detail::deeponet_trunk_dims(c));
      specs.push_back({"bias.delta", {1}, ParamSpec::Kind::Bias});
      specs.push_back({"bias.omega", {1}, ParamSpec::Kind::Bias});
      break;
    }
    case ModelKind::Fno: {
      const auto& c = std::get<FnoConfig>(config);
      specs.push_back({"lift.w", {c.width, 3}, ParamSpec::Kind::DenseWeight});
      specs.push_back({"lift.b", {c.width}, ParamSpec::Kind::Bias});
      for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string idx = std::to_string(l);
        specs.push_back(
            {"spectral." + idx + ".w", {c.modes, c.width, c.width, 2}, ParamSpec::Kind::Spectral});
        specs.push_back({"bypass." + idx + ".w", {c.width, c.width}, ParamSpec::Kind::DenseWeight});
        specs.push_back({"bypass." + idx + ".b", {c.width}, ParamSpec::Kind::Bias});
      }
      numcore::add_mlp_specs(specs, "proj", {c.width, c.projection_hidden, 2});
      break;
    }
    case ModelKind::LnodeFixed:
    case ModelKind::LnodeAdaptive: {
      const auto& c = std::get<LnodeConfig>(config);
      numcore::add_mlp_specs(specs, "encoder", detail::lnode_encoder_dims(c));
      numcore::add_mlp_specs(specs, "dynamics", detail::lnode_dynamics_dims(c));
      numcore::add_mlp_specs(specs, "decoder", detail::lnode_decoder_dims(c));
      break;
    }
  }
  return specs;
}

std::size_t count_params(ModelKind kind, const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& spec : param_specs(kind, config)) n += Tensor::count(spec.shape);
  return n;
}

OperatorModel make_model(ModelKind kind, const ModelConfig& config,
                         const datagen::NormalizationStats& stats, std::uint64_t seed,
                         const TimeWindows& windows) {
  OperatorModel model;
  model.kind = kind;
  model.config = config;
  model.params = numcore::init_params(param_specs(kind, config), seed);
  model.norm_stats = stats;
  model.windows = windows;
  model.seed = seed;
  if (kind == ModelKind::LnodeFixed &&
      std::get<LnodeConfig>(model.config).solver != LnodeSolver::FixedAdams) {
    throw ConfigError("lnode-fixed requires the fixed-Adams solver");
  }
  if (kind == ModelKind::LnodeAdaptive &&
      std::get<LnodeConfig>(model.config).solver != LnodeSolver::AdaptiveDopri) {
    throw ConfigError("lnode-adaptive requires the adaptive-DoPri solver");
  }
  return model;
}

std::array<double, 2> interp_channels(const Tensor& window, double t0, double dt, double t) {
  const std::size_t n = window.dim(0);
  if (n == 1) return {window.at2(0, 0), window.at2(0, 1)};
  double pos = (t - t0) / dt;
  pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= n) i = n - 2;
  const double w = pos - static_cast<double>(i);
  return {(1.0 - w) * window.at2(i, 0) + w * window.at2(i + 1, 0),
          (1.0 - w) * window.at2(i, 1) + w * window.at2(i + 1, 1)};
}

std::vector<double> sensor_vector(const Tensor& norm_input, double t0, double dt,
                                  const std::vector<double>& sensor_times) {
  std::vector<double> out;
  out.reserve(2 * sensor_times.size());
  for (double t : sensor_times) {
    const auto [d, w] = interp_channels(norm_input, t0, dt, t);
    out.push_back(d);
    out.push_back(w);
  }
  return out;
}

Tensor fno_input_signal(const Tensor& norm_input, double t0, double dt,
                        const std::vector<double>& query_times, const TimeWindows& windows) {
  const std::size_t n = query_times.size();
  if (n < 2) throw ConfigError("fno queries need at least two grid points");
  Tensor signal({n, 3});
  for (std::size_t j = 0; j < n; ++j) {
    const double u = windows.input_end * static_cast<double>(j) / static_cast<double>(n - 1);
    const auto [d, w] = interp_channels(norm_input, t0, dt, u);
    signal.at2(j, 0) = d;
    signal.at2(j, 1) = w;
    signal.at2(j, 2) = windows.scale_time(query_times[j]);
  }
  return signal;
}

std::map<std::string, Var> bind_params(Tape& tape, const ParamSet& params, bool requires_grad) {
  std::map<std::string, Var> bound;
  for (const auto& [name, tensor] : params.tensors) {
    bound.emplace(name, tape.leaf(tensor, requires_grad));
  }
  return bound;
}

namespace {

void check_query_window(const std::vector<double>& query_times, const TimeWindows& windows) {
  if (query_times.empty()) throw ConfigError("empty query grid");
  constexpr double slack = 1e-9;
  for (double t : query_times) {
    if (t < windows.target_start - slack || t > windows.target_end + slack) {
      throw ConfigError("query time outside the target window");
    }
  }
}

}  // namespace

Var model_forward(Tape& tape, const OperatorModel& model,
                  const std::map<std::string, Var>& bound, const Tensor& batch_inputs,
                  const std::vector<double>& query_times) {
  check_query_window(query_times, model.windows);
  switch (model.kind) {
    case ModelKind::DeepONet:
      return detail::deeponet_forward(tape, std::get<DeepONetConfig>(model.config), bound,
                                      tape.constant(batch_inputs), query_times, model.windows);
    case ModelKind::Fno:
      return detail::fno_forward(tape, std::get<FnoConfig>(model.config), bound,
                                 tape.constant(batch_inputs));
    case ModelKind::LnodeFixed:
    case ModelKind::LnodeAdaptive:
      return detail::lnode_forward(tape, std::get<LnodeConfig>(model.config), bound,
                                   tape.constant(batch_inputs), query_times, model.windows);
  }
  throw ConfigError("unknown model kind");
}

Tensor batch_inputs_for(const OperatorModel& model, const std::vector<Tensor>& norm_inputs,
                        const std::vector<std::size_t>& indices, double t0, double dt,
                        const std::vector<double>& query_times) {
  const std::size_t batch = indices.size();
  switch (model.kind) {
    case ModelKind::DeepONet:
    case ModelKind::LnodeFixed:
    case ModelKind::LnodeAdaptive: {
      const auto& sensor_times = model.kind == ModelKind::DeepONet
                                     ? std::get<DeepONetConfig>(model.config).sensor_times
                                     : std::get<LnodeConfig>(model.config).sensor_times;
      Tensor out({batch, 2 * sensor_times.size()});
      for (std::size_t b = 0; b < batch; ++b) {
        const std::vector<double> row =
            sensor_vector(norm_inputs[indices[b]], t0, dt, sensor_times);
        std::copy(row.begin(), row.end(), out.data() + b * row.size());
      }
      return out;
    }
    case ModelKind::Fno: {
      Tensor out({batch, query_times.size(), std::size_t{3}});
      for (std::size_t b = 0; b < batch; ++b) {
        const Tensor signal =
            fno_input_signal(norm_inputs[indices[b]], t0, dt, query_times, model.windows);
        std::copy(signal.values().begin(), signal.values().end(),
                  out.data() + b * signal.size());
      }
      return out;
    }
  }
  throw ConfigError("unknown model kind");
}

std::vector<Tensor> OperatorModel::predict_many(const std::vector<Tensor>& norm_inputs, double t0,
                                                double dt,
                                                const std::vector<double>& query_times) const {
  check_query_window(query_times, windows);
  switch (kind) {
    case ModelKind::DeepONet: {
      const auto& c = std::get<DeepONetConfig>(config);
      std::vector<std::vector<double>> rows;
      rows.reserve(norm_inputs.size());
      for (const Tensor& input : norm_inputs) {
        rows.push_back(sensor_vector(input, t0, dt, c.sensor_times));
      }
      return detail::deeponet_predict(c, params, rows, query_times, windows);
    }
    case ModelKind::Fno: {
      const auto& c = std::get<FnoConfig>(config);
      std::vector<Tensor> out;
      out.reserve(norm_inputs.size());
      for (const Tensor& input : norm_inputs) {
        out.push_back(
            detail::fno_predict(c, params, fno_input_signal(input, t0, dt, query_times, windows)));
      }
      return out;
    }
    case ModelKind::LnodeFixed:
    case ModelKind::LnodeAdaptive: {
      const auto& c = std::get<LnodeConfig>(config);
      std::vector<Tensor> out;
      out.reserve(norm_inputs.size());
      for (const Tensor& input : norm_inputs) {
        out.push_back(detail::lnode_predict(c, params,
                                            sensor_vector(input, t0, dt, c.sensor_times),
                                            query_times, windows));
      }
      return out;
    }
  }
  throw ConfigError("unknown model kind");
}

Tensor OperatorModel::predict_normalized(const Tensor& norm_input, double t0, double dt,
                                         const std::vector<double>& query_times) const {
  return predict_many({norm_input}, t0, dt, query_times).front();
}

Tensor OperatorModel::predict(const datagen::Trajectory& input,
                              const std::vector<double>& query_times) const {
  return predict_normalized(datagen::normalize_trajectory(input, norm_stats), input.t0, input.dt,
                            query_times);
}

// ---- Config JSON ----

namespace {

json activation_json(Activation a) { return numcore::to_string(a); }

json config_to_json(const ModelConfig& config) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, DeepONetConfig>) {
          return json{{"sensor_times", c.sensor_times},
                      {"branch_hidden", c.branch_hidden},
                      {"trunk_hidden", c.trunk_hidden},
                      {"basis_size", c.basis_size},
                      {"activation", activation_json(c.activation)}};
        } else if constexpr (std::is_same_v<T, FnoConfig>) {
          return json{{"width", c.width},
                      {"layers", c.layers},
                      {"modes", c.modes},
                      {"projection_hidden", c.projection_hidden},
                      {"activation", activation_json(c.activation)}};
        } else {
          return json{{"sensor_times", c.sensor_times},
                      {"encoder_hidden", c.encoder_hidden},
                      {"latent_dim", c.latent_dim},
                      {"dynamics_hidden", c.dynamics_hidden},
                      {"decoder_hidden", c.decoder_hidden},
                      {"steps_per_unit_time", c.steps_per_unit_time},
                      {"rtol", c.rtol},
                      {"atol", c.atol},
                      {"activation", activation_json(c.activation)}};
        }
      },
      config);
}

ModelConfig config_from_json(ModelKind kind, const json& j) {
  switch (kind) {
    case ModelKind::DeepONet: {
      DeepONetConfig c;
      if (j.contains("sensor_times")) c.sensor_times = j["sensor_times"].get<std::vector<double>>();
      if (j.contains("branch_hidden"))
        c.branch_hidden = j["branch_hidden"].get<std::vector<std::size_t>>();
      if (j.contains("trunk_hidden"))
        c.trunk_hidden = j["trunk_hidden"].get<std::vector<std::size_t>>();
      if (j.contains("basis_size")) c.basis_size = j["basis_size"].get<std::size_t>();
      if (j.contains("activation"))
        c.activation = numcore::activation_from_string(j["activation"].get<std::string>());
      return c;
    }
    case ModelKind::Fno: {
      FnoConfig c;
      if (j.contains("width")) c.width = j["width"].get<std::size_t>();
      if (j.contains("layers")) c.layers = j["layers"].get<std::size_t>();
      if (j.contains("modes")) c.modes = j["modes"].get<std::size_t>();
      if (j.contains("projection_hidden"))
        c.projection_hidden = j["projection_hidden"].get<std::size_t>();
      if (j.contains("activation"))
        c.activation = numcore::activation_from_string(j["activation"].get<std::string>());
      return c;
    }
    case ModelKind::LnodeFixed:
    case ModelKind::LnodeAdaptive: {
      LnodeConfig c;
      c.solver =
          kind == ModelKind::LnodeFixed ? LnodeSolver::FixedAdams : LnodeSolver::AdaptiveDopri;
      if (j.contains("sensor_times")) c.sensor_times = j["sensor_times"].get<std::vector<double>>();
      if (j.contains("encoder_hidden"))
        c.encoder_hidden = j["encoder_hidden"].get<std::vector<std::size_t>>();
      if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<std::size_t>();
      if (j.contains("dynamics_hidden"))
        c.dynamics_hidden = j["dynamics_hidden"].get<std::vector<std::size_t>>();
      if (j.contains("decoder_hidden"))
        c.decoder_hidden = j["decoder_hidden"].get<std::vector<std::size_t>>();
      if (j.contains("steps_per_unit_time"))
        c.steps_per_unit_time = j["steps_per_unit_time"].get<std::size_t>();
      if (j.contains("rtol")) c.rtol = j["rtol"].get<double>();
      if (j.contains("atol")) c.atol = j["atol"].get<double>();
      if (j.contains("activation"))
        c.activation = numcore::activation_from_string(j["activation"].get<std::string>());
      return c;
    }
  }
  throw ConfigError("unknown model kind");
}

constexpr char kCheckpointMagic[8] = {'N', 'O', 'P', 'S', 'C', 'K', '0', '1'};

const std::vector<std::string>& allowed_config_keys(ModelKind kind) {
  static const std::vector<std::string> deeponet{"sensor_times", "branch_hidden", "trunk_hidden",
                                                 "basis_size", "activation"};
  static const std::vector<std::string> fno{"width", "layers", "modes", "projection_hidden",
                                            "activation"};
  static const std::vector<std::string> lnode{
      "sensor_times", "encoder_hidden", "latent_dim", "dynamics_hidden",
      "decoder_hidden", "steps_per_unit_time", "rtol", "atol", "activation"};
  switch (kind) {
    case ModelKind::DeepONet: return deeponet;
    case ModelKind::Fno: return fno;
    default: return lnode;
  }
}

}  // namespace

ModelConfig model_config_from_json(ModelKind kind, const nlohmann::json& j) {
  const auto& allowed = allowed_config_keys(kind);
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown model config key: " + key);
    }
  }
  return config_from_json(kind, j);
}

nlohmann::json model_config_to_json(const ModelConfig& config) { return config_to_json(config); }

void save_checkpoint(const OperatorModel& model, const std::string& path) {
  json header;
  header["kind"] = to_string(model.kind);
  header["config"] = config_to_json(model.config);
  header["windows"] = {{"input_end", model.windows.input_end},
                       {"target_start", model.windows.target_start},
                       {"target_end", model.windows.target_end}};
  header["norm_stats"] = {{"delta_min", model.norm_stats.delta_min},
                          {"delta_max", model.norm_stats.delta_max},
                          {"omega_absmax", model.norm_stats.omega_absmax}};
  header["seed"] = model.seed;
  header["metadata"] = model.metadata;
  json params = json::array();
  for (const auto& [name, tensor] : model.params.tensors) {
    params.push_back({{"name", name}, {"shape", tensor.shape()}});
  }
  header["params"] = std::move(params);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, tensor] : model.params.tensors) {
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed while writing " + path);
}

OperatorModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in) throw TruncatedFileError("checkpoint shorter than its magic: " + path);
  if (std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw MagicMismatchError("not a checkpoint file: " + path);
  }
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw VersionMismatchError("unsupported checkpoint version in " + path);
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw TruncatedFileError("checkpoint truncated before header: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw TruncatedFileError("checkpoint header truncated: " + path);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }

  OperatorModel model;
  model.kind = model_kind_from_string(header.at("kind").get<std::string>());
  model.config = config_from_json(model.kind, header.at("config"));
  model.windows.input_end = header.at("windows").at("input_end").get<double>();
  model.windows.target_start = header.at("windows").at("target_start").get<double>();
  model.windows.target_end = header.at("windows").at("target_end").get<double>();
  model.norm_stats.delta_min = header.at("norm_stats").at("delta_min").get<double>();
  model.norm_stats.delta_max = header.at("norm_stats").at("delta_max").get<double>();
  model.norm_stats.omega_absmax = header.at("norm_stats").at("omega_absmax").get<double>();
  model.seed = header.at("seed").get<std::uint64_t>();
  if (header.contains("metadata")) {
    for (const auto& [key, value] : header.at("metadata").items()) {
      model.metadata[key] = value.get<double>();
    }
  }
  for (const json& pj : header.at("params")) {
    const std::string name = pj.at("name").get<std::string>();
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    Tensor tensor(shape);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    if (!in) throw TruncatedFileError("checkpoint truncated inside parameter " + name);
    model.params.tensors.emplace(name, std::move(tensor));
  }
  return model;
}

}  // namespace psno::operators
