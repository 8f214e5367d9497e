#include "psno/nn.hpp"

#include <cmath>

#include "kernels.hpp"
#include "psno/errors.hpp"
#include "psno/rng.hpp"

namespace psno::numcore {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Gelu: return "gelu";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "gelu") return Activation::Gelu;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation: " + s);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamSet set;
  for (const ParamSpec& spec : specs) {
    if (set.tensors.count(spec.name)) throw ConfigError("duplicate parameter name " + spec.name);
    Tensor t(spec.shape);
    Pcg64 rng(seed, label_stream(spec.name.c_str()));
    switch (spec.kind) {
      case ParamSpec::Kind::Bias:
        break;  // zeros
      case ParamSpec::Kind::DenseWeight: {
        if (spec.shape.size() != 2) throw ConfigError("dense weight must be (out, in)");
        const double bound = glorot_bound(spec.shape[1], spec.shape[0]);
        for (double& v : t.values()) v = rng.uniform(-bound, bound);
        break;
      }
      case ParamSpec::Kind::Spectral: {
        if (spec.shape.size() != 4 || spec.shape.back() != 2) {
          throw ConfigError("spectral weight must be (modes, out, in, 2)");
        }
        const double scale = 1.0 / static_cast<double>(spec.shape[2]);
        for (double& v : t.values()) v = rng.uniform(-scale, scale);
        break;
      }
    }
    set.tensors.emplace(spec.name, std::move(t));
  }
  return set;
}

void add_mlp_specs(std::vector<ParamSpec>& specs, const std::string& prefix,
                   const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ConfigError("mlp needs at least one layer");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    specs.push_back({base + ".w", {dims[l + 1], dims[l]}, ParamSpec::Kind::DenseWeight});
    specs.push_back({base + ".b", {dims[l + 1]}, ParamSpec::Kind::Bias});
  }
}

Var apply_activation(Tape& tape, Var x, Activation act) {
  switch (act) {
    case Activation::Tanh: return tape.tanh(x);
    case Activation::Gelu: return tape.gelu(x);
    case Activation::Identity: return x;
  }
  return x;
}

Var mlp_forward(Tape& tape, const std::map<std::string, Var>& params, const std::string& prefix,
                std::size_t layers, Var x, Activation act) {
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    h = tape.affine(h, params.at(base + ".w"), params.at(base + ".b"));
    if (l + 1 < layers) h = apply_activation(tape, h, act);
  }
  return h;
}

namespace {

void apply_activation(Tensor& t, Activation act) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  switch (act) {
    case Activation::Tanh:
      for (double& v : t.values()) v = std::tanh(v);
      break;
    case Activation::Gelu:
      for (double& v : t.values()) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
      break;
    case Activation::Identity:
      break;
  }
}

}  // namespace

Tensor mlp_eval(const ParamSet& params, const std::string& prefix, std::size_t layers,
                const Tensor& x, Activation act) {
  Tensor h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    const Tensor& w = params.at(base + ".w");
    const Tensor& b = params.at(base + ".b");
    const std::size_t in = w.dim(1), out = w.dim(0);
    if (h.shape().back() != in) throw ConfigError("mlp_eval shape mismatch at " + base);
    std::vector<std::size_t> shape = h.shape();
    shape.back() = out;
    Tensor y(shape);
    kernels::affine_forward(h.data(), w.data(), b.data(), y.data(), h.size() / in, in, out);
    if (l + 1 < layers) apply_activation(y, act);
    h = std::move(y);
  }
  return h;
}

AdamState AdamState::create(const ParamSet& params, const AdamOptions& opts) {
  AdamState state;
  state.opts = opts;
  for (const auto& [name, t] : params.tensors) {
    state.m.emplace(name, Tensor(t.shape()));
    state.v.emplace(name, Tensor(t.shape()));
  }
  return state;
}

void adam_step(AdamState& state, ParamSet& params, const std::map<std::string, Tensor>& grads) {
  state.step += 1;
  const double b1 = state.opts.beta1, b2 = state.opts.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, p] : params.tensors) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw ConfigError("missing gradient for " + name);
    const Tensor& g = git->second;
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    if (!g.same_shape(p)) throw ConfigError("gradient shape mismatch for " + name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.opts.lr * mhat / (std::sqrt(vhat) + state.opts.eps);
    }
  }
}

}  // namespace psno::numcore
