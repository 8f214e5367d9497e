#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "psno/autodiff.hpp"
#include "psno/rng.hpp"
#include "psno/tensor.hpp"

using namespace psno;
using numcore::Tape;
using numcore::Var;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Pcg64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

// Checks d(loss)/d(param) against central differences for a computation
// rebuilt from a flat parameter vector.
void gradcheck(const std::function<double(const std::vector<double>&, std::vector<double>*)>& eval,
               const std::vector<double>& params, double tol = 1e-5) {
  std::vector<double> analytic;
  eval(params, &analytic);
  const auto numeric = oracles::fd_gradient(
      [&eval](const std::vector<double>& p) { return eval(p, nullptr); }, params);
  REQUIRE(analytic.size() == numeric.size());
  CHECK(numcore::relative_gradient_error(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("gradient of a linear loss is the broadcast input") {
  Tape tape;
  Pcg64 rng(1, 1);
  const Tensor x = random_tensor({4, 3}, rng);
  const Var xv = tape.constant(x);
  const Var w = tape.leaf(random_tensor({2, 3}, rng));
  const Var b = tape.leaf(Tensor({2}));
  const Var loss = tape.sum_all(tape.affine(xv, w, b));
  tape.backward(loss);
  const Tensor& dw = tape.grad(w);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      double col = 0.0;
      for (std::size_t r = 0; r < 4; ++r) col += x.at2(r, i);
      CHECK(dw.at2(o, i) == doctest::Approx(col).epsilon(1e-14));
    }
  }
  const Tensor& db = tape.grad(b);
  CHECK(db[0] == 4.0);
  CHECK(db[1] == 4.0);
}

TEST_CASE("disconnected parameters get exactly zero gradient") {
  Tape tape;
  Pcg64 rng(2, 1);
  const Var used = tape.leaf(random_tensor({3}, rng));
  const Var unused = tape.leaf(random_tensor({5}, rng));
  const Var loss = tape.sum_sq(used);
  tape.backward(loss);
  for (double v : tape.grad(unused).values()) CHECK(v == 0.0);
}

TEST_CASE("finite differences: dense layers and activations") {
  Pcg64 rng(3, 1);
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor target = random_tensor({5, 2}, rng);
  // Parameters: W1 (6x4), b1 (6), W2 (2x6), b2 (2) flattened.
  std::vector<double> params;
  for (int i = 0; i < 6 * 4 + 6 + 2 * 6 + 2; ++i) params.push_back(rng.uniform(-0.7, 0.7));

  auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
    Tape tape;
    std::size_t at = 0;
    auto take = [&](std::vector<std::size_t> shape) {
      Tensor t(shape);
      for (double& v : t.values()) v = p[at++];
      return tape.leaf(std::move(t));
    };
    const Var w1 = take({6, 4});
    const Var b1 = take({6});
    const Var w2 = take({2, 6});
    const Var b2 = take({2});
    const Var h = tape.gelu(tape.tanh(tape.affine(tape.constant(x), w1, b1)));
    const Var y = tape.affine(h, w2, b2);
    const Var diff = tape.add(y, tape.scale(tape.constant(target), -1.0));
    const Var loss = tape.sum_sq(diff);
    const double value = tape.value(loss)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->clear();
      for (const Var v : {w1, b1, w2, b2}) {
        for (double g : tape.grad(v).values()) grad_out->push_back(g);
      }
    }
    return value;
  };
  gradcheck(eval, params);
}

TEST_CASE("finite differences: structural ops") {
  Pcg64 rng(4, 1);
  std::vector<double> params;
  for (int i = 0; i < 4 * 6 + 6 * 3; ++i) params.push_back(rng.uniform(-1.0, 1.0));

  auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
    Tape tape;
    std::size_t at = 0;
    auto take = [&](std::vector<std::size_t> shape) {
      Tensor t(shape);
      for (double& v : t.values()) v = p[at++];
      return tape.leaf(std::move(t));
    };
    const Var a = take({4, 6});
    const Var b = take({6, 3});
    const Var prod = tape.matmul(a, b);                      // (4,3)
    const Var tr = tape.transpose(prod);                     // (3,4)
    const Var sl = tape.slice_cols(tr, 1, 3);                // (3,2)
    const Var app = tape.append_const_col(sl, 0.5);          // (3,3)
    const Var left = tape.slice_cols(app, 0, 2);             // (3,2)
    const Var right = tape.slice_cols(app, 1, 3);            // (3,2)
    const Var inter = tape.interleave2(left, right);         // (3,2,2)
    const Var stacked = tape.stack_rows(std::vector<Var>{sl, sl});  // (3,2,2)
    const Var merged = tape.add(inter, tape.scale(stacked, 0.25));
    const Var loss = tape.sum_sq(tape.mul(merged, merged));
    const double value = tape.value(loss)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->clear();
      for (const Var v : {a, b}) {
        for (double g : tape.grad(v).values()) grad_out->push_back(g);
      }
    }
    return value;
  };
  gradcheck(eval, params);
}

TEST_CASE("finite differences: lincomb and add_scalar") {
  Pcg64 rng(5, 1);
  std::vector<double> params;
  for (int i = 0; i < 12 + 12 + 1; ++i) params.push_back(rng.uniform(-1.0, 1.0));
  auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
    Tape tape;
    std::size_t at = 0;
    auto take = [&](std::vector<std::size_t> shape) {
      Tensor t(shape);
      for (double& v : t.values()) v = p[at++];
      return tape.leaf(std::move(t));
    };
    const Var a = take({3, 4});
    const Var b = take({3, 4});
    const Var s = take({1});
    const Var combo = tape.lincomb(
        std::vector<std::pair<double, Var>>{{0.3, a}, {-1.2, b}, {2.0, a}});
    const Var shifted = tape.add_scalar(combo, s);
    const Var loss = tape.sum_sq(tape.tanh(shifted));
    const double value = tape.value(loss)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->clear();
      for (const Var v : {a, b, s}) {
        for (double g : tape.grad(v).values()) grad_out->push_back(g);
      }
    }
    return value;
  };
  gradcheck(eval, params);
}

TEST_CASE("finite differences: spectral convolution") {
  for (const std::size_t n : {std::size_t{8}, std::size_t{9}}) {
    for (const std::size_t m : {std::size_t{2}, n / 2 + 1}) {
      Pcg64 rng(6 + n + m, 1);
      const std::size_t cin = 2, cout = 3, batch = 2;
      const Tensor x = random_tensor({batch, n, cin}, rng);
      std::vector<double> params;
      for (std::size_t i = 0; i < m * cout * cin * 2; ++i) params.push_back(rng.uniform(-1, 1));

      auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
        Tape tape;
        Tensor wt({m, cout, cin, 2});
        std::copy(p.begin(), p.end(), wt.values().begin());
        const Var w = tape.leaf(std::move(wt));
        const Var y = tape.spectral_conv(tape.constant(x), w);
        const Var loss = tape.sum_sq(y);
        const double value = tape.value(loss)[0];
        if (grad_out) {
          tape.backward(loss);
          grad_out->assign(tape.grad(w).values().begin(), tape.grad(w).values().end());
        }
        return value;
      };
      gradcheck(eval, params);
    }
  }
}

TEST_CASE("finite differences: gradient flows through spectral input") {
  Pcg64 rng(77, 1);
  const std::size_t n = 8, cin = 2, cout = 2, m = 3, batch = 2;
  const Tensor w_fixed = random_tensor({m, cout, cin, 2}, rng);
  std::vector<double> params;
  for (std::size_t i = 0; i < batch * n * cin; ++i) params.push_back(rng.uniform(-1, 1));

  auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
    Tape tape;
    Tensor xt({batch, n, cin});
    std::copy(p.begin(), p.end(), xt.values().begin());
    const Var x = tape.leaf(std::move(xt));
    const Var y = tape.spectral_conv(x, tape.leaf(w_fixed));
    const Var loss = tape.sum_sq(tape.gelu(y));
    const double value = tape.value(loss)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->assign(tape.grad(x).values().begin(), tape.grad(x).values().end());
    }
    return value;
  };
  gradcheck(eval, params);
}

TEST_CASE("finite differences: H1 loss") {
  Pcg64 rng(8, 1);
  const std::size_t batch = 3, n = 9;
  const Tensor target = random_tensor({batch, n, 2}, rng);
  std::vector<double> params;
  for (std::size_t i = 0; i < batch * n * 2; ++i) params.push_back(rng.uniform(-1, 1));

  auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
    Tape tape;
    Tensor pt({batch, n, 2});
    std::copy(p.begin(), p.end(), pt.values().begin());
    const Var pred = tape.leaf(std::move(pt));
    const Var loss = tape.h1_loss(pred, target, 0.1);
    const double value = tape.value(loss)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->assign(tape.grad(pred).values().begin(), tape.grad(pred).values().end());
    }
    return value;
  };
  gradcheck(eval, params);
}

TEST_CASE("finite differences: twenty random small networks") {
  for (std::uint64_t net = 0; net < 20; ++net) {
    Pcg64 rng(100 + net, 9);
    const std::size_t in = 2 + net % 3, hidden = 3 + net % 4, out = 1 + net % 2;
    const std::size_t batch = 2 + net % 3;
    const Tensor x = random_tensor({batch, in}, rng);
    std::vector<double> params;
    const std::size_t count = hidden * in + hidden + out * hidden + out;
    for (std::size_t i = 0; i < count; ++i) params.push_back(rng.uniform(-0.8, 0.8));
    const bool use_gelu = net % 2 == 0;

    auto eval = [&](const std::vector<double>& p, std::vector<double>* grad_out) {
      Tape tape;
      std::size_t at = 0;
      auto take = [&](std::vector<std::size_t> shape) {
        Tensor t(shape);
        for (double& v : t.values()) v = p[at++];
        return tape.leaf(std::move(t));
      };
      const Var w1 = take({hidden, in});
      const Var b1 = take({hidden});
      const Var w2 = take({out, hidden});
      const Var b2 = take({out});
      Var h = tape.affine(tape.constant(x), w1, b1);
      h = use_gelu ? tape.gelu(h) : tape.tanh(h);
      const Var y = tape.affine(h, w2, b2);
      const Var loss = tape.sum_sq(y);
      const double value = tape.value(loss)[0];
      if (grad_out) {
        tape.backward(loss);
        grad_out->clear();
        for (const Var v : {w1, b1, w2, b2}) {
          for (double g : tape.grad(v).values()) grad_out->push_back(g);
        }
      }
      return value;
    };
    gradcheck(eval, params);
  }
}

TEST_CASE("backward runs once and grad before backward throws") {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var loss = tape.sum_sq(x);
  CHECK_THROWS_AS(tape.grad(x), ConfigError);
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == 4.0);
  CHECK_THROWS_AS(tape.backward(loss), ConfigError);
}
