#include "kernels.hpp"
#include "model_internal.hpp"
#include "psno/errors.hpp"

namespace psno::operators::detail {

namespace {

using detail::deeponet_branch_dims;
using detail::deeponet_trunk_dims;

Tensor scaled_query_column(const std::vector<double>& query_times, const TimeWindows& windows) {
  Tensor col({query_times.size(), 1});
  for (std::size_t q = 0; q < query_times.size(); ++q) {
    col.at2(q, 0) = windows.scale_time(query_times[q]);
  }
  return col;
}

}  // namespace

Var deeponet_forward(Tape& tape, const DeepONetConfig& config,
                     const std::map<std::string, Var>& bound, Var sensors,
                     const std::vector<double>& query_times, const TimeWindows& windows) {
  const std::size_t p = config.basis_size;
  const std::size_t branch_layers = deeponet_branch_dims(config).size() - 1;
  const std::size_t trunk_layers = deeponet_trunk_dims(config).size() - 1;

  const Var branch = numcore::mlp_forward(tape, bound, "branch", branch_layers, sensors,
                                          config.activation);  // (B, 2p)
  const Var trunk_in = tape.constant(scaled_query_column(query_times, windows));
  const Var trunk = numcore::mlp_forward(tape, bound, "trunk", trunk_layers, trunk_in,
                                         config.activation);  // (n_q, p)
  const Var basis = tape.transpose(trunk);                    // (p, n_q)

  const Var coeff_delta = tape.slice_cols(branch, 0, p);
  const Var coeff_omega = tape.slice_cols(branch, p, 2 * p);
  const Var out_delta = tape.add_scalar(tape.matmul(coeff_delta, basis), bound.at("bias.delta"));
  const Var out_omega = tape.add_scalar(tape.matmul(coeff_omega, basis), bound.at("bias.omega"));
  return tape.interleave2(out_delta, out_omega);  // (B, n_q, 2)
}

std::vector<Tensor> deeponet_predict(const DeepONetConfig& config, const numcore::ParamSet& params,
                                     const std::vector<std::vector<double>>& sensor_rows,
                                     const std::vector<double>& query_times,
                                     const TimeWindows& windows) {
  const std::size_t p = config.basis_size;
  const std::size_t n_q = query_times.size();
  const std::size_t branch_layers = deeponet_branch_dims(config).size() - 1;
  const std::size_t trunk_layers = deeponet_trunk_dims(config).size() - 1;

  // The trunk only depends on the query grid: evaluate it once per call.
  const Tensor basis = numcore::mlp_eval(params, "trunk", trunk_layers,
                                         scaled_query_column(query_times, windows),
                                         config.activation);  // (n_q, p)
  const double bias_delta = params.at("bias.delta")[0];
  const double bias_omega = params.at("bias.omega")[0];

  std::vector<Tensor> out;
  out.reserve(sensor_rows.size());
  for (const std::vector<double>& row : sensor_rows) {
    Tensor sens({std::size_t{1}, row.size()}, std::vector<double>(row));
    const Tensor coeffs = numcore::mlp_eval(params, "branch", branch_layers, sens,
                                            config.activation);  // (1, 2p)
    Tensor pred({n_q, 2});
    for (std::size_t q = 0; q < n_q; ++q) {
      const double* tau = basis.data() + q * p;
      pred.at2(q, 0) = kernels::dot(coeffs.data(), tau, p) + bias_delta;
      pred.at2(q, 1) = kernels::dot(coeffs.data() + p, tau, p) + bias_omega;
    }
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace psno::operators::detail
