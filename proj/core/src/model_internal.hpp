#pragma once

#include <map>
#include <string>
#include <vector>

#include "psno/operators.hpp"

// Per-architecture forward passes. The tape variants drive training; the
// plain variants drive inference and stay memory-lean on large query grids.
// Cross-consistency of the two paths is pinned by tests.

namespace psno::operators::detail {

using numcore::Tape;
using numcore::Var;

inline std::vector<std::size_t> deeponet_branch_dims(const DeepONetConfig& c) {
  std::vector<std::size_t> dims{2 * c.sensor_times.size()};
  dims.insert(dims.end(), c.branch_hidden.begin(), c.branch_hidden.end());
  dims.push_back(2 * c.basis_size);
  return dims;
}

inline std::vector<std::size_t> deeponet_trunk_dims(const DeepONetConfig& c) {
  std::vector<std::size_t> dims{1};
  dims.insert(dims.end(), c.trunk_hidden.begin(), c.trunk_hidden.end());
  dims.push_back(c.basis_size);
  return dims;
}

inline std::vector<std::size_t> lnode_encoder_dims(const LnodeConfig& c) {
  std::vector<std::size_t> dims{2 * c.sensor_times.size()};
  dims.insert(dims.end(), c.encoder_hidden.begin(), c.encoder_hidden.end());
  dims.push_back(c.latent_dim);
  return dims;
}

inline std::vector<std::size_t> lnode_dynamics_dims(const LnodeConfig& c) {
  std::vector<std::size_t> dims{c.latent_dim + 1};
  dims.insert(dims.end(), c.dynamics_hidden.begin(), c.dynamics_hidden.end());
  dims.push_back(c.latent_dim);
  return dims;
}

inline std::vector<std::size_t> lnode_decoder_dims(const LnodeConfig& c) {
  std::vector<std::size_t> dims{c.latent_dim};
  dims.insert(dims.end(), c.decoder_hidden.begin(), c.decoder_hidden.end());
  dims.push_back(2);
  return dims;
}

Var deeponet_forward(Tape& tape, const DeepONetConfig& config,
                     const std::map<std::string, Var>& bound, Var sensors,
                     const std::vector<double>& query_times, const TimeWindows& windows);

std::vector<Tensor> deeponet_predict(const DeepONetConfig& config, const numcore::ParamSet& params,
                                     const std::vector<std::vector<double>>& sensor_rows,
                                     const std::vector<double>& query_times,
                                     const TimeWindows& windows);

Var fno_forward(Tape& tape, const FnoConfig& config, const std::map<std::string, Var>& bound,
                Var signal);

Tensor fno_predict(const FnoConfig& config, const numcore::ParamSet& params, const Tensor& signal);

Var lnode_forward(Tape& tape, const LnodeConfig& config, const std::map<std::string, Var>& bound,
                  Var sensors, const std::vector<double>& query_times, const TimeWindows& windows);

Tensor lnode_predict(const LnodeConfig& config, const numcore::ParamSet& params,
                     const std::vector<double>& sensor_row,
                     const std::vector<double>& query_times, const TimeWindows& windows);

}  // namespace psno::operators::detail
