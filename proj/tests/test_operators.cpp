#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "psno/errors.hpp"
#include "psno/operators.hpp"
#include "psno/time_grid.hpp"

using namespace psno;
using namespace psno::operators;

namespace {

datagen::NormalizationStats test_stats() {
  datagen::NormalizationStats s;
  s.delta_min = 0.0;
  s.delta_max = std::numbers::pi;
  s.omega_absmax = 10.0;
  return s;
}

// Normalized 3-point input window on [0, 0.2].
Tensor sample_input(std::uint64_t seed) {
  Pcg64 rng(seed, 2);
  Tensor input({3, 2});
  for (double& v : input.values()) v = rng.uniform(0.0, 1.0);
  return input;
}

void zero_params(OperatorModel& model) {
  for (auto& [name, t] : model.params.tensors) {
    for (double& v : t.values()) v = 0.0;
  }
}

DeepONetConfig tiny_deeponet() {
  DeepONetConfig c;
  c.branch_hidden = {8};
  c.trunk_hidden = {8};
  c.basis_size = 4;
  return c;
}

FnoConfig tiny_fno() {
  FnoConfig c;
  c.width = 6;
  c.layers = 2;
  c.modes = 4;
  c.projection_hidden = 8;
  return c;
}

LnodeConfig tiny_lnode(LnodeSolver solver) {
  LnodeConfig c;
  c.encoder_hidden = {8};
  c.latent_dim = 5;
  c.dynamics_hidden = {8};
  c.decoder_hidden = {8};
  c.solver = solver;
  return c;
}

ModelKind kind_of(LnodeSolver solver) {
  return solver == LnodeSolver::FixedAdams ? ModelKind::LnodeFixed : ModelKind::LnodeAdaptive;
}

}  // namespace

TEST_CASE("parameter counts match the closed-form reference values") {
  // Hand-computed: sum over layers of fan_in*fan_out + fan_out (+ output
  // biases / complex spectral blocks).
  CHECK(count_params(ModelKind::DeepONet, DeepONetConfig{}) == 726914);
  CHECK(count_params(ModelKind::Fno, FnoConfig{}) == 753666);
  LnodeConfig lnode;
  CHECK(count_params(ModelKind::LnodeFixed, lnode) == 725954);

  // All reference configs sit inside the 700k +- 10% budget.
  for (ModelKind kind : {ModelKind::DeepONet, ModelKind::Fno, ModelKind::LnodeFixed,
                         ModelKind::LnodeAdaptive}) {
    const std::size_t count = count_params(kind, default_config(kind));
    CHECK(count >= 630000);
    CHECK(count <= 770000);
  }

  FnoConfig degenerate;
  degenerate.layers = 0;
  CHECK(count_params(ModelKind::Fno, degenerate) ==
        (6 * 80 * 14 * 80 * 0) + (80 * 3 + 80) + (128 * 80 + 128) + (2 * 128 + 2));
}

TEST_CASE("zeroed models predict exactly zero") {
  const auto query = uniform_grid(0.3, 0.1, 29);
  for (ModelKind kind : {ModelKind::DeepONet, ModelKind::Fno, ModelKind::LnodeFixed}) {
    ModelConfig config = kind == ModelKind::DeepONet ? ModelConfig{tiny_deeponet()}
                         : kind == ModelKind::Fno    ? ModelConfig{tiny_fno()}
                                  : ModelConfig{tiny_lnode(LnodeSolver::FixedAdams)};
    OperatorModel model = make_model(kind, config, test_stats(), 1);
    zero_params(model);
    const Tensor pred = model.predict_normalized(sample_input(3), 0.0, 0.1, query);
    for (double v : pred.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("constructed rank-one DeepONet reproduces the scaled time") {
  DeepONetConfig config;
  config.branch_hidden = {};
  config.trunk_hidden = {};
  config.basis_size = 1;
  OperatorModel model = make_model(ModelKind::DeepONet, config, test_stats(), 0);
  zero_params(model);
  // Branch emits 1 for both channels; trunk is the identity on s(t).
  model.params.at("branch.0.b")[0] = 1.0;
  model.params.at("branch.0.b")[1] = 1.0;
  model.params.at("trunk.0.w")[0] = 1.0;

  const auto query = uniform_grid(0.3, 0.1, 29);
  const Tensor pred = model.predict_normalized(sample_input(5), 0.0, 0.1, query);
  for (std::size_t q = 0; q < query.size(); ++q) {
    const double s = (query[q] - 0.3) / 2.8;
    CHECK(pred.at2(q, 0) == doctest::Approx(s).epsilon(1e-14));
    CHECK(pred.at2(q, 1) == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("DeepONet coarse predictions are a bit-exact subsequence of fine ones") {
  OperatorModel model = make_model(ModelKind::DeepONet, tiny_deeponet(), test_stats(), 7);
  const Tensor input = sample_input(11);
  const auto coarse = uniform_grid(0.3, 0.1, 29);
  const auto fine = uniform_grid(0.3, 5e-5, 56001);
  const Tensor pc = model.predict_normalized(input, 0.0, 0.1, coarse);
  const Tensor pf = model.predict_normalized(input, 0.0, 0.1, fine);
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    CHECK(pf.at2(2000 * k, 0) == pc.at2(k, 0));
    CHECK(pf.at2(2000 * k, 1) == pc.at2(k, 1));
  }
}

TEST_CASE("LNODE with zero dynamics holds the encoded state") {
  for (LnodeSolver solver : {LnodeSolver::FixedAdams, LnodeSolver::AdaptiveDopri}) {
    OperatorModel model = make_model(kind_of(solver), tiny_lnode(solver), test_stats(), 3);
    for (auto& [name, t] : model.params.tensors) {
      if (name.rfind("dynamics", 0) == 0) {
        for (double& v : t.values()) v = 0.0;
      }
    }
    const auto query = uniform_grid(0.3, 0.1, 29);
    const Tensor pred = model.predict_normalized(sample_input(9), 0.0, 0.1, query);
    for (std::size_t q = 1; q < query.size(); ++q) {
      CHECK(pred.at2(q, 0) == doctest::Approx(pred.at2(0, 0)).epsilon(1e-12));
      CHECK(pred.at2(q, 1) == doctest::Approx(pred.at2(0, 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("LNODE solvers reproduce a linear latent flow") {
  const double lambda = -0.5;
  for (LnodeSolver solver : {LnodeSolver::FixedAdams, LnodeSolver::AdaptiveDopri}) {
    LnodeConfig config;
    config.encoder_hidden = {};
    config.latent_dim = 1;
    config.dynamics_hidden = {};
    config.decoder_hidden = {};
    config.solver = solver;
    OperatorModel model = make_model(kind_of(solver), config, test_stats(), 0);
    zero_params(model);
    model.params.at("encoder.0.b")[0] = 1.0;       // z(tau) = 1
    model.params.at("dynamics.0.w")[0] = lambda;   // dz/dt = lambda z
    model.params.at("decoder.0.w")[0] = 1.0;       // both channels read z
    model.params.at("decoder.0.w")[1] = 1.0;

    const auto query = uniform_grid(0.3, 0.1, 29);
    const Tensor pred = model.predict_normalized(sample_input(2), 0.0, 0.1, query);
    for (std::size_t q = 0; q < query.size(); ++q) {
      const double expected = std::exp(lambda * (query[q] - 0.2));
      CHECK(std::abs(pred.at2(q, 0) - expected) / expected < 1e-6);
    }
  }
}

TEST_CASE("LNODE fixed and adaptive solvers agree on a smooth model") {
  const Tensor input = sample_input(21);
  const auto query = uniform_grid(0.3, 0.1, 29);
  OperatorModel fixed = make_model(ModelKind::LnodeFixed, tiny_lnode(LnodeSolver::FixedAdams),
                                   test_stats(), 5);
  OperatorModel adaptive = make_model(ModelKind::LnodeAdaptive,
                                      tiny_lnode(LnodeSolver::AdaptiveDopri), test_stats(), 5);
  const Tensor pf = fixed.predict_normalized(input, 0.0, 0.1, query);
  const Tensor pa = adaptive.predict_normalized(input, 0.0, 0.1, query);
  for (std::size_t i = 0; i < pf.size(); ++i) CHECK(std::abs(pf[i] - pa[i]) < 1e-4);
}

TEST_CASE("LNODE adaptive predictions are discretization consistent") {
  OperatorModel model = make_model(ModelKind::LnodeAdaptive,
                                   tiny_lnode(LnodeSolver::AdaptiveDopri), test_stats(), 13);
  const Tensor input = sample_input(14);
  const auto coarse = uniform_grid(0.3, 0.1, 29);
  const auto fine = uniform_grid(0.3, 5e-5, 56001);
  const Tensor pc = model.predict_normalized(input, 0.0, 0.1, coarse);
  const Tensor pf = model.predict_normalized(input, 0.0, 0.1, fine);
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    CHECK(std::abs(pf.at2(2000 * k, 0) - pc.at2(k, 0)) < 1e-6);
    CHECK(std::abs(pf.at2(2000 * k, 1) - pc.at2(k, 1)) < 1e-6);
  }
}

TEST_CASE("tape forward matches the inference path") {
  const auto query = uniform_grid(0.3, 0.1, 29);
  const std::vector<Tensor> inputs{sample_input(31), sample_input(32)};
  for (ModelKind kind : {ModelKind::DeepONet, ModelKind::Fno, ModelKind::LnodeFixed,
                         ModelKind::LnodeAdaptive}) {
    ModelConfig config = kind == ModelKind::DeepONet ? ModelConfig{tiny_deeponet()}
                         : kind == ModelKind::Fno    ? ModelConfig{tiny_fno()}
                         : kind == ModelKind::LnodeFixed
                             ? ModelConfig{tiny_lnode(LnodeSolver::FixedAdams)}
                             : ModelConfig{tiny_lnode(LnodeSolver::AdaptiveDopri)};
    const OperatorModel model = make_model(kind, config, test_stats(), 17);

    numcore::Tape tape;
    const auto bound = bind_params(tape, model.params, false);
    const Tensor batch =
        batch_inputs_for(model, inputs, {0, 1}, 0.0, 0.1, query);
    const numcore::Var out = model_forward(tape, model, bound, batch, query);
    const Tensor& tape_value = tape.value(out);

    // The batched adaptive solve shares one accepted-step sequence across
    // the batch, so it matches per-record inference only to solver accuracy.
    const double tol = kind == ModelKind::LnodeAdaptive ? 1e-4 : 1e-11;
    const std::vector<Tensor> preds = model.predict_many(inputs, 0.0, 0.1, query);
    for (std::size_t b = 0; b < preds.size(); ++b) {
      for (std::size_t q = 0; q < query.size(); ++q) {
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(std::abs(tape_value.at3(b, q, c) - preds[b].at2(q, c)) < tol);
        }
      }
    }
  }
}

TEST_CASE("query times outside the target window are rejected") {
  OperatorModel model = make_model(ModelKind::DeepONet, tiny_deeponet(), test_stats(), 1);
  CHECK_THROWS_AS(model.predict_normalized(sample_input(1), 0.0, 0.1, {0.1}), ConfigError);
  CHECK_THROWS_AS(model.predict_normalized(sample_input(1), 0.0, 0.1, {3.5}), ConfigError);
}

TEST_CASE("checkpoints round trip") {
  OperatorModel model = make_model(ModelKind::Fno, tiny_fno(), test_stats(), 23);
  model.metadata["best_epoch"] = 4.0;
  const std::string path =
      (std::filesystem::temp_directory_path() / "psno_ckpt_test.bin").string();
  save_checkpoint(model, path);
  const OperatorModel loaded = load_checkpoint(path);
  CHECK(loaded.kind == model.kind);
  CHECK(loaded.seed == model.seed);
  CHECK(loaded.metadata.at("best_epoch") == 4.0);
  CHECK(loaded.norm_stats.omega_absmax == model.norm_stats.omega_absmax);
  for (const auto& [name, t] : model.params.tensors) {
    CHECK(loaded.params.at(name).values() == t.values());
  }

  const auto query = uniform_grid(0.3, 0.1, 29);
  const Tensor input = sample_input(40);
  CHECK(loaded.predict_normalized(input, 0.0, 0.1, query).values() ==
        model.predict_normalized(input, 0.0, 0.1, query).values());

  // Corrupted magic bytes are reported distinctly.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    bytes[0] = 'Z';
    std::ofstream(path, std::ios::binary) << bytes;
  }
  CHECK_THROWS_AS(load_checkpoint(path), MagicMismatchError);
  std::remove(path.c_str());
}

TEST_CASE("model kind names round trip") {
  for (ModelKind kind : {ModelKind::DeepONet, ModelKind::Fno, ModelKind::LnodeFixed,
                         ModelKind::LnodeAdaptive}) {
    CHECK(model_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(model_kind_from_string("transformer"), ConfigError);
}
