#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psno/autodiff.hpp"
#include "psno/tensor.hpp"

namespace psno::numcore {

enum class Activation { Tanh, Gelu, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Named parameter tensors with deterministic (alphabetical) iteration order.
struct ParamSet {
  std::map<std::string, Tensor> tensors;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }
  Tensor& at(const std::string& name) { return tensors.at(name); }
  const Tensor& at(const std::string& name) const { return tensors.at(name); }
};

// Shape plan for a ParamSet entry; `spectral` entries hold complex weights
// (trailing dimension 2) initialized at 1/fan_in scale, dense entries use
// uniform Glorot, biases are zero.
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  enum class Kind { DenseWeight, Bias, Spectral } kind = Kind::DenseWeight;
};

// Deterministic per (seed, parameter name).
ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);

double glorot_bound(std::size_t fan_in, std::size_t fan_out);

// Registers dense weight/bias specs for an MLP with the given layer sizes
// under names "<prefix>.<layer>.w" / ".b".
void add_mlp_specs(std::vector<ParamSpec>& specs, const std::string& prefix,
                   const std::vector<std::size_t>& dims);

Var apply_activation(Tape& tape, Var x, Activation act);

// Applies an MLP on the tape: hidden layers use `act`, the final layer is
// linear. `params` maps names to bound tape leaves.
Var mlp_forward(Tape& tape, const std::map<std::string, Var>& params, const std::string& prefix,
                std::size_t layers, Var x, Activation act);

// Inference-path MLP on plain tensors (no tape).
Tensor mlp_eval(const ParamSet& params, const std::string& prefix, std::size_t layers,
                const Tensor& x, Activation act);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions opts;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;  // first moments
  std::map<std::string, Tensor> v;  // second moments

  static AdamState create(const ParamSet& params, const AdamOptions& opts);
};

// One bias-corrected Adam update in place.
void adam_step(AdamState& state, ParamSet& params, const std::map<std::string, Tensor>& grads);

}  // namespace psno::numcore
