#include <complex>

#include "kernels.hpp"
#include "model_internal.hpp"
#include "psno/errors.hpp"
#include "psno/fft.hpp"

namespace psno::operators::detail {

Var fno_forward(Tape& tape, const FnoConfig& config, const std::map<std::string, Var>& bound,
                Var signal) {
  Var h = tape.affine(signal, bound.at("lift.w"), bound.at("lift.b"));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string idx = std::to_string(l);
    const Var spec = tape.spectral_conv(h, bound.at("spectral." + idx + ".w"));
    const Var byp = tape.affine(h, bound.at("bypass." + idx + ".w"),
                                bound.at("bypass." + idx + ".b"));
    h = numcore::apply_activation(tape, tape.add(spec, byp), config.activation);
  }
  h = numcore::apply_activation(
      tape, tape.affine(h, bound.at("proj.0.w"), bound.at("proj.0.b")), config.activation);
  return tape.affine(h, bound.at("proj.1.w"), bound.at("proj.1.b"));
}

// Inference path: identical math on plain buffers, one record at a time, so
// fine query grids (tens of thousands of points) stay within a few
// signal-sized scratch arrays.
Tensor fno_predict(const FnoConfig& config, const numcore::ParamSet& params, const Tensor& signal) {
  using fft::cplx;
  if (signal.rank() != 2) throw ConfigError("fno_predict expects an (n, channels) signal");
  const std::size_t n = signal.dim(0);
  if (n < 2) throw ConfigError("fno queries need at least two grid points");
  const std::size_t w = config.width;
  const std::size_t avail = n / 2 + 1;
  const std::size_t mt = std::min(config.modes, avail);

  const Tensor& lift_w = params.at("lift.w");
  const Tensor& lift_b = params.at("lift.b");
  Tensor h({n, w});
  kernels::affine_forward(signal.data(), lift_w.data(), lift_b.data(), h.data(), n,
                          signal.dim(1), w);

  std::vector<double> sig(n);
  std::vector<cplx> xhat(mt * w), yhat(mt * w), ch_modes(mt);
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string idx = std::to_string(l);
    const Tensor& sw = params.at("spectral." + idx + ".w");
    const Tensor& bw = params.at("bypass." + idx + ".w");
    const Tensor& bb = params.at("bypass." + idx + ".b");

    for (std::size_t ci = 0; ci < w; ++ci) {
      for (std::size_t j = 0; j < n; ++j) sig[j] = h.at2(j, ci);
      fft::rfft_truncated(sig, mt, ch_modes.data());
      for (std::size_t k = 0; k < mt; ++k) xhat[k * w + ci] = ch_modes[k];
    }
    for (std::size_t k = 0; k < mt; ++k) {
      const cplx* xk = xhat.data() + k * w;
      for (std::size_t co = 0; co < w; ++co) {
        const double* wk = sw.data() + ((k * w + co) * w) * 2;
        double re = 0.0, im = 0.0;
        for (std::size_t ci = 0; ci < w; ++ci) {
          re += wk[2 * ci] * xk[ci].real() - wk[2 * ci + 1] * xk[ci].imag();
          im += wk[2 * ci] * xk[ci].imag() + wk[2 * ci + 1] * xk[ci].real();
        }
        yhat[k * w + co] = cplx(re, im);
      }
    }

    Tensor next({n, w});
    kernels::affine_forward(h.data(), bw.data(), bb.data(), next.data(), n, w, w);
    for (std::size_t co = 0; co < w; ++co) {
      for (std::size_t k = 0; k < mt; ++k) ch_modes[k] = yhat[k * w + co];
      fft::irfft_truncated(ch_modes, n, sig.data());
      for (std::size_t j = 0; j < n; ++j) next.at2(j, co) += sig[j];
    }
    switch (config.activation) {
      case Activation::Tanh:
        for (double& v : next.values()) v = std::tanh(v);
        break;
      case Activation::Gelu:
        for (double& v : next.values()) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
        break;
      case Activation::Identity:
        break;
    }
    h = std::move(next);
  }

  Tensor proj = numcore::mlp_eval(params, "proj", 2, h, config.activation);
  return proj;
}

}  // namespace psno::operators::detail
