#include "psno/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "psno/errors.hpp"
#include "psno/fft.hpp"

namespace psno::numcore {

namespace {

using fft::cplx;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

std::size_t leading(const Tensor& t) { return t.size() / last_dim(t); }

// Forward finite-difference stencil: central interior, one-sided endpoints.
void fd_apply(const double* v, double* out, std::size_t n, double dt) {
  out[0] = (v[1] - v[0]) / dt;
  for (std::size_t j = 1; j + 1 < n; ++j) out[j] = (v[j + 1] - v[j - 1]) / (2.0 * dt);
  out[n - 1] = (v[n - 1] - v[n - 2]) / dt;
}

// out += D^T w for the stencil above.
void fd_apply_transpose(const double* w, double* out, std::size_t n, double dt) {
  out[0] += -w[0] / dt;
  out[1] += w[0] / dt;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    out[j - 1] -= w[j] / (2.0 * dt);
    out[j + 1] += w[j] / (2.0 * dt);
  }
  out[n - 2] -= w[n - 1] / dt;
  out[n - 1] += w[n - 1] / dt;
}

// Duplication weights of the one-sided real spectrum: interior modes stand
// for a conjugate pair, the DC (and even-length Nyquist) mode for itself.
double mode_weight(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (n % 2 == 0 && k == n / 2) return 1.0;
  return 2.0;
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var b) {
  const Tensor& xv = nodes_[x.idx].value;
  const Tensor& wv = nodes_[w.idx].value;
  const Tensor& bv = nodes_[b.idx].value;
  const std::size_t in = wv.dim(1), out = wv.dim(0);
  if (last_dim(xv) != in || bv.size() != out) throw ConfigError("affine shape mismatch");
  const std::size_t rows = leading(xv);
  std::vector<std::size_t> shape = xv.shape();
  shape.back() = out;
  Tensor y(shape);
  kernels::affine_forward(xv.data(), wv.data(), bv.data(), y.data(), rows, in, out);
  Node n;
  n.op = Op::Affine;
  n.inputs = {x.idx, w.idx, b.idx};
  n.value = std::move(y);
  n.requires_grad = nodes_[x.idx].requires_grad || nodes_[w.idx].requires_grad ||
                    nodes_[b.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = nodes_[a.idx].value;
  const Tensor& bv = nodes_[b.idx].value;
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ConfigError("matmul shape mismatch");
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* yi = y.data() + i * n;
    const double* ai = av.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      if (ai[kk] != 0.0) kernels::axpy(ai[kk], bv.data() + kk * n, yi, n);
    }
  }
  Node node;
  node.op = Op::Matmul;
  node.inputs = {a.idx, b.idx};
  node.value = std::move(y);
  node.requires_grad = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
  return push(std::move(node));
}

Var Tape::tanh(Var x) {
  Node n;
  n.op = Op::Tanh;
  n.inputs = {x.idx};
  n.value = nodes_[x.idx].value;
  for (double& v : n.value.values()) v = std::tanh(v);
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::gelu(Var x) {
  Node n;
  n.op = Op::Gelu;
  n.inputs = {x.idx};
  n.value = nodes_[x.idx].value;
  for (double& v : n.value.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = nodes_[a.idx].value;
  const Tensor& bv = nodes_[b.idx].value;
  if (!av.same_shape(bv)) throw ConfigError("add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.inputs = {a.idx, b.idx};
  n.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] += bv[i];
  n.requires_grad = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = nodes_[a.idx].value;
  const Tensor& bv = nodes_[b.idx].value;
  if (!av.same_shape(bv)) throw ConfigError("mul shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.idx, b.idx};
  n.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] *= bv[i];
  n.requires_grad = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::scale(Var x, double c) {
  Node n;
  n.op = Op::Scale;
  n.inputs = {x.idx};
  n.value = nodes_[x.idx].value;
  for (double& v : n.value.values()) v *= c;
  n.coeffs = {c};
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::add_scalar(Var x, Var s) {
  const Tensor& sv = nodes_[s.idx].value;
  if (sv.size() != 1) throw ConfigError("add_scalar expects a single-element tensor");
  Node n;
  n.op = Op::AddScalar;
  n.inputs = {x.idx, s.idx};
  n.value = nodes_[x.idx].value;
  for (double& v : n.value.values()) v += sv[0];
  n.requires_grad = nodes_[x.idx].requires_grad || nodes_[s.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::lincomb(std::span<const std::pair<double, Var>> terms) {
  if (terms.empty()) throw ConfigError("lincomb needs at least one term");
  const Tensor& first = nodes_[terms[0].second.idx].value;
  Node n;
  n.op = Op::Lincomb;
  n.value = Tensor(first.shape());
  for (const auto& [c, v] : terms) {
    const Tensor& tv = nodes_[v.idx].value;
    if (!tv.same_shape(first)) throw ConfigError("lincomb shape mismatch");
    kernels::axpy(c, tv.data(), n.value.data(), tv.size());
    n.inputs.push_back(v.idx);
    n.coeffs.push_back(c);
    n.requires_grad = n.requires_grad || nodes_[v.idx].requires_grad;
  }
  return push(std::move(n));
}

Var Tape::append_const_col(Var x, double fill) {
  const Tensor& xv = nodes_[x.idx].value;
  if (xv.rank() != 2) throw ConfigError("append_const_col expects a matrix");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor y({rows, cols + 1});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * cols, cols, y.data() + r * (cols + 1));
    y.at2(r, cols) = fill;
  }
  Node n;
  n.op = Op::AppendConstCol;
  n.inputs = {x.idx};
  n.value = std::move(y);
  n.fill = fill;
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::slice_cols(Var x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = nodes_[x.idx].value;
  if (xv.rank() != 2 || c1 > xv.dim(1) || c0 >= c1) throw ConfigError("slice_cols out of range");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor y({rows, c1 - c0});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * cols + c0, c1 - c0, y.data() + r * (c1 - c0));
  }
  Node n;
  n.op = Op::SliceCols;
  n.inputs = {x.idx};
  n.value = std::move(y);
  n.c0 = c0;
  n.c1 = c1;
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::transpose(Var x) {
  const Tensor& xv = nodes_[x.idx].value;
  if (xv.rank() != 2) throw ConfigError("transpose expects a matrix");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor y({cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y.at2(c, r) = xv.at2(r, c);
  }
  Node n;
  n.op = Op::Transpose;
  n.inputs = {x.idx};
  n.value = std::move(y);
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::interleave2(Var a, Var b) {
  const Tensor& av = nodes_[a.idx].value;
  const Tensor& bv = nodes_[b.idx].value;
  if (av.rank() != 2 || !av.same_shape(bv)) throw ConfigError("interleave2 shape mismatch");
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor y({rows, cols, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      y.at3(r, j, 0) = av.at2(r, j);
      y.at3(r, j, 1) = bv.at2(r, j);
    }
  }
  Node n;
  n.op = Op::Interleave2;
  n.inputs = {a.idx, b.idx};
  n.value = std::move(y);
  n.requires_grad = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::stack_rows(std::span<const Var> slices) {
  if (slices.empty()) throw ConfigError("stack_rows needs at least one slice");
  const Tensor& first = nodes_[slices[0].idx].value;
  if (first.rank() != 2) throw ConfigError("stack_rows expects matrices");
  const std::size_t batch = first.dim(0), ch = first.dim(1), steps = slices.size();
  Tensor y({batch, steps, ch});
  Node n;
  n.op = Op::StackRows;
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor& sv = nodes_[slices[s].idx].value;
    if (!sv.same_shape(first)) throw ConfigError("stack_rows shape mismatch");
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(sv.data() + b * ch, ch, y.data() + (b * steps + s) * ch);
    }
    n.inputs.push_back(slices[s].idx);
    n.requires_grad = n.requires_grad || nodes_[slices[s].idx].requires_grad;
  }
  n.value = std::move(y);
  return push(std::move(n));
}

namespace {

// Split interleaved complex weights into re/im planes so the per-mode
// multiplies run as plain real dot products.
void split_planes(const Tensor& w, std::vector<double>& re, std::vector<double>& im) {
  const std::size_t pairs = w.size() / 2;
  re.resize(pairs);
  im.resize(pairs);
  const double* src = w.data();
  for (std::size_t i = 0; i < pairs; ++i) {
    re[i] = src[2 * i];
    im[i] = src[2 * i + 1];
  }
}

}  // namespace

Var Tape::spectral_conv(Var x, Var w) {
  const Tensor& xv = nodes_[x.idx].value;
  const Tensor& wv = nodes_[w.idx].value;
  if (xv.rank() != 3) throw ConfigError("spectral_conv expects (batch, n, channels)");
  if (wv.rank() != 4 || wv.dim(3) != 2 || wv.dim(2) != xv.dim(2)) {
    throw ConfigError("spectral_conv weight shape mismatch");
  }
  const std::size_t batch = xv.dim(0), n = xv.dim(1), cin = xv.dim(2);
  const std::size_t cout = wv.dim(1);
  const std::size_t avail = n / 2 + 1;
  const std::size_t mt = std::min(wv.dim(0), avail);

  Node node;
  node.op = Op::SpectralConv;
  node.inputs = {x.idx, w.idx};
  node.modes = mt;
  node.value = Tensor({batch, n, cout});
  node.xhat_re.resize(batch * mt * cin);
  node.xhat_im.resize(batch * mt * cin);
  node.requires_grad = nodes_[x.idx].requires_grad || nodes_[w.idx].requires_grad;

  std::vector<double> wre, wim;
  split_planes(wv, wre, wim);

  std::vector<double> sig(n);
  std::vector<cplx> ch_modes(mt);
  for (std::size_t b = 0; b < batch; ++b) {
    double* xr = node.xhat_re.data() + b * mt * cin;  // (mode, cin)
    double* xi = node.xhat_im.data() + b * mt * cin;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t j = 0; j < n; ++j) sig[j] = xv.at3(b, j, ci);
      fft::rfft_truncated(sig, mt, ch_modes.data());
      for (std::size_t k = 0; k < mt; ++k) {
        xr[k * cin + ci] = ch_modes[k].real();
        xi[k * cin + ci] = ch_modes[k].imag();
      }
    }
    // yhat_k = W_k xhat_k per mode, as four real dot products per entry.
    std::vector<cplx> yhat(mt * cout);
    for (std::size_t k = 0; k < mt; ++k) {
      const double* xkr = xr + k * cin;
      const double* xki = xi + k * cin;
      for (std::size_t co = 0; co < cout; ++co) {
        const double* wkr = wre.data() + (k * cout + co) * cin;
        const double* wki = wim.data() + (k * cout + co) * cin;
        yhat[k * cout + co] =
            cplx(kernels::dot(wkr, xkr, cin) - kernels::dot(wki, xki, cin),
                 kernels::dot(wkr, xki, cin) + kernels::dot(wki, xkr, cin));
      }
    }
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t k = 0; k < mt; ++k) ch_modes[k] = yhat[k * cout + co];
      fft::irfft_truncated(ch_modes, n, sig.data());
      for (std::size_t j = 0; j < n; ++j) node.value.at3(b, j, co) = sig[j];
    }
  }
  return push(std::move(node));
}

Var Tape::h1_loss(Var pred, const Tensor& target, double dt) {
  const Tensor& pv = nodes_[pred.idx].value;
  if (pv.rank() != 3 || !pv.same_shape(target)) throw ConfigError("h1_loss shape mismatch");
  const std::size_t n = pv.dim(1);
  if (n < 2) throw ConfigError("h1_loss needs at least two samples");
  const std::size_t batch = pv.dim(0), ch = pv.dim(2);

  std::vector<double> r(n), dr(n), u(n), du(n);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      double num_sq = 0.0, den_sq = 1e-12;
      for (std::size_t j = 0; j < n; ++j) {
        u[j] = target.at3(b, j, c);
        r[j] = pv.at3(b, j, c) - u[j];
      }
      fd_apply(r.data(), dr.data(), n, dt);
      fd_apply(u.data(), du.data(), n, dt);
      for (std::size_t j = 0; j < n; ++j) {
        num_sq += dt * (r[j] * r[j] + dr[j] * dr[j]);
        den_sq += dt * (u[j] * u[j] + du[j] * du[j]);
      }
      loss += std::sqrt(num_sq) / std::sqrt(den_sq);
    }
  }
  loss /= static_cast<double>(batch * ch);

  Node node;
  node.op = Op::H1Loss;
  node.inputs = {pred.idx};
  node.value = Tensor::scalar(loss);
  node.target = target;
  node.dt = dt;
  node.requires_grad = nodes_[pred.idx].requires_grad;
  return push(std::move(node));
}

Var Tape::sum_sq(Var x) {
  const Tensor& xv = nodes_[x.idx].value;
  double s = 0.0;
  for (double v : xv.values()) s += v * v;
  Node n;
  n.op = Op::SumSq;
  n.inputs = {x.idx};
  n.value = Tensor::scalar(s);
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Var Tape::sum_all(Var x) {
  const Tensor& xv = nodes_[x.idx].value;
  double s = 0.0;
  for (double v : xv.values()) s += v;
  Node n;
  n.op = Op::SumAll;
  n.inputs = {x.idx};
  n.value = Tensor::scalar(s);
  n.requires_grad = nodes_[x.idx].requires_grad;
  return push(std::move(n));
}

Tensor& Tape::adjoint(int idx) {
  if (!touched_[idx]) {
    adjoints_[idx] = Tensor(nodes_[idx].value.shape());
    touched_[idx] = 1;
  }
  return adjoints_[idx];
}

void Tape::backward(Var loss) {
  if (ran_backward_) throw ConfigError("backward may run once per tape");
  ran_backward_ = true;
  if (nodes_[loss.idx].value.size() != 1) throw ConfigError("backward target must be scalar");
  adjoints_.resize(nodes_.size());
  touched_.assign(nodes_.size(), 0);
  adjoint(loss.idx)[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (!touched_[i] || !nodes_[i].requires_grad) continue;
    backprop_node(i);
  }
}

const Tensor& Tape::grad(Var v) {
  if (adjoints_.empty()) throw ConfigError("grad queried before backward");
  if (!touched_[v.idx]) adjoint(v.idx);  // materialize zeros
  return adjoints_[v.idx];
}

void Tape::backprop_node(int idx) {
  Node& node = nodes_[idx];
  const Tensor& g = adjoints_[idx];
  auto needs = [&](int input) { return nodes_[input].requires_grad; };

  switch (node.op) {
    case Op::Leaf:
      break;
    case Op::Affine: {
      const Tensor& xv = nodes_[node.inputs[0]].value;
      const Tensor& wv = nodes_[node.inputs[1]].value;
      const std::size_t in = wv.dim(1), out = wv.dim(0);
      const std::size_t rows = leading(xv);
      if (needs(node.inputs[0])) {
        kernels::affine_backward_input(g.data(), wv.data(), adjoint(node.inputs[0]).data(), rows,
                                       in, out);
      }
      const bool need_w = needs(node.inputs[1]);
      const bool need_b = needs(node.inputs[2]);
      if (need_w || need_b) {
        double* dw = need_w ? adjoint(node.inputs[1]).data() : nullptr;
        double* db = need_b ? adjoint(node.inputs[2]).data() : nullptr;
        if (need_w) {
          kernels::affine_backward_params(g.data(), xv.data(), dw, db, rows, in, out);
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < out; ++o) db[o] += g.data()[r * out + o];
          }
        }
      }
      break;
    }
    case Op::Matmul: {
      const Tensor& av = nodes_[node.inputs[0]].value;
      const Tensor& bv = nodes_[node.inputs[1]].value;
      const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
      if (needs(node.inputs[0])) {
        Tensor& da = adjoint(node.inputs[0]);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            da.at2(i, kk) += kernels::dot(g.data() + i * n, bv.data() + kk * n, n);
          }
        }
      }
      if (needs(node.inputs[1])) {
        Tensor& db = adjoint(node.inputs[1]);
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * n;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double a = av.at2(i, kk);
            if (a != 0.0) kernels::axpy(a, gi, db.data() + kk * n, n);
          }
        }
      }
      break;
    }
    case Op::Tanh: {
      Tensor& dx = adjoint(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = node.value[i];
        dx[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::Gelu: {
      const Tensor& xv = nodes_[node.inputs[0]].value;
      Tensor& dx = adjoint(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        dx[i] += g[i] * (cdf + x * pdf);
      }
      break;
    }
    case Op::Add: {
      for (int side = 0; side < 2; ++side) {
        if (!needs(node.inputs[side])) continue;
        Tensor& d = adjoint(node.inputs[side]);
        kernels::axpy(1.0, g.data(), d.data(), g.size());
      }
      break;
    }
    case Op::Mul: {
      for (int side = 0; side < 2; ++side) {
        if (!needs(node.inputs[side])) continue;
        const Tensor& other = nodes_[node.inputs[1 - side]].value;
        Tensor& d = adjoint(node.inputs[side]);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
      }
      break;
    }
    case Op::Scale: {
      if (needs(node.inputs[0])) {
        kernels::axpy(node.coeffs[0], g.data(), adjoint(node.inputs[0]).data(), g.size());
      }
      break;
    }
    case Op::AddScalar: {
      if (needs(node.inputs[0])) {
        kernels::axpy(1.0, g.data(), adjoint(node.inputs[0]).data(), g.size());
      }
      if (needs(node.inputs[1])) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
        adjoint(node.inputs[1])[0] += s;
      }
      break;
    }
    case Op::Lincomb: {
      for (std::size_t t = 0; t < node.inputs.size(); ++t) {
        if (!needs(node.inputs[t])) continue;
        kernels::axpy(node.coeffs[t], g.data(), adjoint(node.inputs[t]).data(), g.size());
      }
      break;
    }
    case Op::AppendConstCol: {
      if (!needs(node.inputs[0])) break;
      Tensor& dx = adjoint(node.inputs[0]);
      const std::size_t rows = dx.dim(0), cols = dx.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        kernels::axpy(1.0, g.data() + r * (cols + 1), dx.data() + r * cols, cols);
      }
      break;
    }
    case Op::SliceCols: {
      if (!needs(node.inputs[0])) break;
      Tensor& dx = adjoint(node.inputs[0]);
      const std::size_t rows = dx.dim(0), cols = dx.dim(1), width = node.c1 - node.c0;
      for (std::size_t r = 0; r < rows; ++r) {
        kernels::axpy(1.0, g.data() + r * width, dx.data() + r * cols + node.c0, width);
      }
      break;
    }
    case Op::Transpose: {
      if (!needs(node.inputs[0])) break;
      Tensor& dx = adjoint(node.inputs[0]);
      const std::size_t rows = dx.dim(0), cols = dx.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dx.at2(r, c) += g.at2(c, r);
      }
      break;
    }
    case Op::Interleave2: {
      const std::size_t rows = g.dim(0), cols = g.dim(1);
      for (int side = 0; side < 2; ++side) {
        if (!needs(node.inputs[side])) continue;
        Tensor& d = adjoint(node.inputs[side]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) d.at2(r, j) += g.at3(r, j, side);
        }
      }
      break;
    }
    case Op::StackRows: {
      const std::size_t batch = g.dim(0), steps = g.dim(1), ch = g.dim(2);
      for (std::size_t s = 0; s < steps; ++s) {
        if (!needs(node.inputs[s])) continue;
        Tensor& d = adjoint(node.inputs[s]);
        for (std::size_t b = 0; b < batch; ++b) {
          kernels::axpy(1.0, g.data() + (b * steps + s) * ch, d.data() + b * ch, ch);
        }
      }
      break;
    }
    case Op::SpectralConv: {
      const Tensor& xv = nodes_[node.inputs[0]].value;
      const Tensor& wv = nodes_[node.inputs[1]].value;
      const std::size_t batch = xv.dim(0), n = xv.dim(1), cin = xv.dim(2);
      const std::size_t cout = wv.dim(1), mt = node.modes;
      const bool need_x = needs(node.inputs[0]);
      const bool need_w = needs(node.inputs[1]);
      Tensor* dx = need_x ? &adjoint(node.inputs[0]) : nullptr;
      Tensor* dw = need_w ? &adjoint(node.inputs[1]) : nullptr;

      std::vector<double> wre, wim;
      if (need_x) split_planes(wv, wre, wim);
      std::vector<double> dwre, dwim;
      if (need_w) {
        dwre.assign(mt * cout * cin, 0.0);
        dwim.assign(mt * cout * cin, 0.0);
      }

      std::vector<double> sig(n);
      std::vector<cplx> t_modes(mt);
      std::vector<double> gre(mt * cout), gim(mt * cout);
      std::vector<double> tre(cin), tim(cin);
      std::vector<cplx> dx_modes(need_x ? mt * cin : 0);
      for (std::size_t b = 0; b < batch; ++b) {
        // Unscaled truncated spectrum of the output adjoint.
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t j = 0; j < n; ++j) sig[j] = g.at3(b, j, co);
          fft::rfft_truncated(sig, mt, t_modes.data());
          for (std::size_t k = 0; k < mt; ++k) {
            gre[k * cout + co] = t_modes[k].real();
            gim[k * cout + co] = t_modes[k].imag();
          }
        }
        const double* xr = node.xhat_re.data() + b * mt * cin;
        const double* xi = node.xhat_im.data() + b * mt * cin;
        if (need_w) {
          // dW_k += (c_k / n) ghat_k conj(xhat_k)^T
          for (std::size_t k = 0; k < mt; ++k) {
            const double scale = mode_weight(k, n) / static_cast<double>(n);
            const double* xkr = xr + k * cin;
            const double* xki = xi + k * cin;
            for (std::size_t co = 0; co < cout; ++co) {
              const double gr = gre[k * cout + co] * scale;
              const double gi = gim[k * cout + co] * scale;
              double* wr = dwre.data() + (k * cout + co) * cin;
              double* wi = dwim.data() + (k * cout + co) * cin;
              kernels::axpy(gr, xkr, wr, cin);
              kernels::axpy(gi, xki, wr, cin);
              kernels::axpy(gi, xkr, wi, cin);
              kernels::axpy(-gr, xki, wi, cin);
            }
          }
        }
        if (need_x) {
          // dx = irfft_trunc(W^H ghat), channel by channel.
          for (std::size_t k = 0; k < mt; ++k) {
            std::fill(tre.begin(), tre.end(), 0.0);
            std::fill(tim.begin(), tim.end(), 0.0);
            for (std::size_t co = 0; co < cout; ++co) {
              const double gr = gre[k * cout + co];
              const double gi = gim[k * cout + co];
              const double* wr = wre.data() + (k * cout + co) * cin;
              const double* wi = wim.data() + (k * cout + co) * cin;
              kernels::axpy(gr, wr, tre.data(), cin);
              kernels::axpy(gi, wi, tre.data(), cin);
              kernels::axpy(gi, wr, tim.data(), cin);
              kernels::axpy(-gr, wi, tim.data(), cin);
            }
            // Accumulate this mode's contribution per input channel lazily:
            // stash into the per-mode scratch consumed below.
            for (std::size_t ci = 0; ci < cin; ++ci) {
              dx_modes[k * cin + ci] = cplx(tre[ci], tim[ci]);
            }
          }
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t k = 0; k < mt; ++k) t_modes[k] = dx_modes[k * cin + ci];
            fft::irfft_truncated(t_modes, n, sig.data());
            for (std::size_t j = 0; j < n; ++j) dx->at3(b, j, ci) += sig[j];
          }
        }
      }
      if (need_w) {
        double* out = dw->data();
        for (std::size_t i = 0; i < dwre.size(); ++i) {
          out[2 * i] += dwre[i];
          out[2 * i + 1] += dwim[i];
        }
      }
      break;
    }
    case Op::H1Loss: {
      if (!needs(node.inputs[0])) break;
      const Tensor& pv = nodes_[node.inputs[0]].value;
      const Tensor& tv = node.target;
      const double dt = node.dt;
      const double gscale = g[0];
      const std::size_t batch = pv.dim(0), n = pv.dim(1), ch = pv.dim(2);
      Tensor& dp = adjoint(node.inputs[0]);
      std::vector<double> r(n), dr(n), u(n), du(n), dtd(n);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
          double num_sq = 0.0, den_sq = 1e-12;
          for (std::size_t j = 0; j < n; ++j) {
            u[j] = tv.at3(b, j, c);
            r[j] = pv.at3(b, j, c) - u[j];
          }
          fd_apply(r.data(), dr.data(), n, dt);
          fd_apply(u.data(), du.data(), n, dt);
          for (std::size_t j = 0; j < n; ++j) {
            num_sq += dt * (r[j] * r[j] + dr[j] * dr[j]);
            den_sq += dt * (u[j] * u[j] + du[j] * du[j]);
          }
          const double num = std::sqrt(num_sq);
          if (num == 0.0) continue;  // zero residual: subgradient 0
          std::fill(dtd.begin(), dtd.end(), 0.0);
          fd_apply_transpose(dr.data(), dtd.data(), n, dt);
          const double denom = num * std::sqrt(den_sq) * static_cast<double>(batch * ch);
          for (std::size_t j = 0; j < n; ++j) {
            dp.at3(b, j, c) += gscale * dt * (r[j] + dtd[j]) / denom;
          }
        }
      }
      break;
    }
    case Op::SumSq: {
      if (!needs(node.inputs[0])) break;
      const Tensor& xv = nodes_[node.inputs[0]].value;
      Tensor& dx = adjoint(node.inputs[0]);
      for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[0] * 2.0 * xv[i];
      break;
    }
    case Op::SumAll: {
      if (!needs(node.inputs[0])) break;
      Tensor& dx = adjoint(node.inputs[0]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
      break;
    }
  }
}

double relative_gradient_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace psno::numcore
