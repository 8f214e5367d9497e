#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "psno/tensor.hpp"

namespace psno::numcore {

// Handle into a Tape. Default-constructed handles are invalid.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over the primitive set the surrogate models need:
// affine maps, pointwise nonlinearities, constant-coefficient linear
// combinations (solver steps, interpolation, dense output), spectral
// convolutions, and the training loss. Gradients are exact for the recorded
// discrete computation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t node_count() const { return nodes_.size(); }

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // X(..., in) with weights (out, in) and bias (out) -> (..., out).
  Var affine(Var x, Var w, Var b);
  // A(m, k) @ B(k, n) -> (m, n).
  Var matmul(Var a, Var b);
  Var tanh(Var x);
  Var gelu(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double c);
  // X + s with s a single-element tensor broadcast over X.
  Var add_scalar(Var x, Var s);
  // sum_i coeff_i * term_i over equally shaped tensors.
  Var lincomb(std::span<const std::pair<double, Var>> terms);
  // (R, C) -> (R, C+1), constant fill in the appended column.
  Var append_const_col(Var x, double fill);
  // (R, C) -> (R, c1 - c0), columns [c0, c1).
  Var slice_cols(Var x, std::size_t c0, std::size_t c1);
  // (R, C) -> (C, R).
  Var transpose(Var x);
  // (B, n), (B, n) -> (B, n, 2).
  Var interleave2(Var a, Var b);
  // T tensors of shape (B, C) -> (B, T, C).
  Var stack_rows(std::span<const Var> slices);
  // X(B, n, c_in) with complex weights (modes, c_out, c_in, 2) -> (B, n, c_out):
  // rfft along n, truncate to min(modes, n/2+1), per-mode complex matrix
  // multiply, irfft back.
  Var spectral_conv(Var x, Var w);
  // Relative discrete H1 error, mean over channels and batch entries.
  // pred and target are (B, n, C); the derivative stencil is central with
  // one-sided ends at spacing dt.
  Var h1_loss(Var pred, const Tensor& target, double dt);
  Var sum_sq(Var x);
  Var sum_all(Var x);

  const Tensor& value(Var v) const { return nodes_[v.idx].value; }

  // Reverse sweep from a scalar loss node. May be called once per tape.
  void backward(Var loss);
  // Gradient of the last backward() target w.r.t. a leaf (or any node).
  // Returns a zero tensor of matching shape when the node was not reached.
  const Tensor& grad(Var v);

 private:
  enum class Op {
    Leaf,
    Affine,
    Matmul,
    Tanh,
    Gelu,
    Add,
    Mul,
    Scale,
    AddScalar,
    Lincomb,
    AppendConstCol,
    SliceCols,
    Transpose,
    Interleave2,
    StackRows,
    SpectralConv,
    H1Loss,
    SumSq,
    SumAll,
  };

  struct Node {
    Op op = Op::Leaf;
    std::vector<int> inputs;
    Tensor value;
    bool requires_grad = false;  // true when any ancestor is a grad leaf

    // Op-specific payloads.
    std::vector<double> coeffs;      // Lincomb coefficients / Scale factor
    std::size_t c0 = 0, c1 = 0;      // SliceCols range
    double fill = 0.0;               // AppendConstCol value
    std::size_t modes = 0;           // SpectralConv retained modes
    std::vector<double> xhat_re;     // SpectralConv cached input modes,
    std::vector<double> xhat_im;     // split planes (batch, mode, c_in)
    Tensor target;                   // H1Loss target
    double dt = 0.0;                 // H1Loss spacing
  };

  Var push(Node node);
  Tensor& adjoint(int idx);
  void backprop_node(int idx);

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  std::vector<char> touched_;
  bool ran_backward_ = false;
};

// Central finite-difference gradient of a scalar-valued rebuild function,
// used by the gradient-check suites. `eval` must rebuild the computation
// from scratch for the supplied parameter vector.
double relative_gradient_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace psno::numcore
