#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "psno/evaluation.hpp"

using namespace psno;
using namespace psno::evaluation;

namespace {

Tensor from_rows(std::vector<std::vector<double>> rows) {
  Tensor t({rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.at2(i, j) = rows[i][j];
  }
  return t;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rmse basics") {
  std::vector<Tensor> target{from_rows({{1.0, 2.0}, {3.0, 4.0}})};
  CHECK(rmse(target, target) == 0.0);

  std::vector<Tensor> offset = target;
  for (double& v : offset[0].values()) v += 0.1;
  CHECK(rmse(offset, target) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("rmse hand example over two trajectories") {
  // One channel, errors {0, 0.3, 0.4} and {0, 0, 0}: sqrt(0.25 / 6).
  std::vector<Tensor> preds{from_rows({{0.0}, {0.3}, {0.4}}), from_rows({{0.0}, {0.0}, {0.0}})};
  std::vector<Tensor> targets{from_rows({{0.0}, {0.0}, {0.0}}),
                              from_rows({{0.0}, {0.0}, {0.0}})};
  CHECK(rmse(preds, targets) == doctest::Approx(std::sqrt(0.25 / 6.0)).epsilon(1e-12));
  CHECK_THROWS_AS(rmse({}, {}), ConfigError);
}

TEST_CASE("mase of the persistence predictor is exactly one") {
  Pcg64 rng(5, 1);
  Tensor target({12, 2});
  for (double& v : target.values()) v = rng.uniform(-3.0, 3.0);
  Tensor pred({12, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    pred.at2(0, c) = target.at2(0, c);
    for (std::size_t t = 1; t < 12; ++t) pred.at2(t, c) = target.at2(t - 1, c);
  }
  CHECK(mase(pred, target) == 1.0);
}

TEST_CASE("mase basics") {
  Tensor target = from_rows({{0.0}, {1.0}, {2.0}});
  Tensor pred = from_rows({{0.0}, {0.0}, {0.0}});
  // All-points numerator (0+1+2)/3 over the n-point baseline mean (0+1+1)/3.
  CHECK(mase(pred, target) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(mase(target, target) == 0.0);
  CHECK_THROWS_AS(mase(from_rows({{1.0}}), from_rows({{1.0}})), ConfigError);

  const MaseParts parts = mase_parts(pred, target);
  CHECK(parts.numerator == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(parts.denominator == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("percent difference") {
  SUBCASE("identical runs give zero with a degenerate interval") {
    const std::vector<double> runs{0.02, 0.025, 0.03};
    const auto pd = percent_difference(runs, runs);
    CHECK(pd.point == 0.0);
    CHECK(pd.ci_low == 0.0);
    CHECK(pd.ci_high == 0.0);
  }
  SUBCASE("constant ratio gives a point CI") {
    const std::vector<double> coarse(5, 0.02), fine(5, 0.03);
    const auto pd = percent_difference(coarse, fine);
    CHECK(pd.point == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(pd.ci_low == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(pd.ci_high == doctest::Approx(50.0).epsilon(1e-9));
  }
  SUBCASE("bootstrap is deterministic in the seed") {
    const std::vector<double> coarse{0.02, 0.021, 0.019, 0.022};
    const std::vector<double> fine{0.03, 0.027, 0.033, 0.035};
    const auto a = percent_difference(coarse, fine, 7);
    const auto b = percent_difference(coarse, fine, 7);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    CHECK(a.ci_low <= a.point);
    CHECK(a.point <= a.ci_high);
  }
  SUBCASE("zero coarse mean is an error") {
    CHECK_THROWS_AS(percent_difference(std::vector<double>{0.0}, std::vector<double>{0.1}),
                    NumericalError);
  }
}

TEST_CASE("rmse and mase are permutation and channel symmetric") {
  Pcg64 rng(9, 2);
  std::vector<Tensor> preds, targets;
  for (int i = 0; i < 4; ++i) {
    Tensor p({7, 2}), t({7, 2});
    for (double& v : p.values()) v = rng.uniform(-1, 1);
    for (double& v : t.values()) v = rng.uniform(-1, 1);
    preds.push_back(p);
    targets.push_back(t);
  }
  const double base = rmse(preds, targets);
  std::swap(preds[0], preds[3]);
  std::swap(targets[0], targets[3]);
  CHECK(rmse(preds, targets) == doctest::Approx(base).epsilon(1e-15));

  // Swap channels in both pred and target.
  Tensor p = preds[1], t = targets[1];
  Tensor ps({7, 2}), ts({7, 2});
  for (std::size_t j = 0; j < 7; ++j) {
    ps.at2(j, 0) = p.at2(j, 1);
    ps.at2(j, 1) = p.at2(j, 0);
    ts.at2(j, 0) = t.at2(j, 1);
    ts.at2(j, 1) = t.at2(j, 0);
  }
  CHECK(mase(ps, ts) == doctest::Approx(mase(p, t)).epsilon(1e-15));
}

TEST_CASE("shared-parameter check") {
  datagen::SamplingConfig c;
  c.n_train = 2;
  c.n_val = 1;
  c.n_test = 2;
  c.unstable_fraction = 0.0;
  c.seed = 3;
  const auto a = datagen::build_dataset(c);
  SUBCASE("same draw passes") {
    CHECK_NOTHROW(check_shared_params(a.test, datagen::build_dataset(c).test));
  }
  SUBCASE("different seed fails") {
    c.seed = 4;
    CHECK_THROWS_AS(check_shared_params(a.test, datagen::build_dataset(c).test), ConfigError);
  }
}

TEST_CASE("superres evaluation with identical resolutions is a null experiment") {
  datagen::SamplingConfig c;
  c.n_train = 8;
  c.n_val = 2;
  c.n_test = 3;
  c.seed = 6;
  const auto triple = datagen::build_dataset(c);

  operators::DeepONetConfig config;
  config.branch_hidden = {8};
  config.trunk_hidden = {8};
  config.basis_size = 4;
  std::vector<operators::OperatorModel> models;
  for (std::uint64_t run = 0; run < 2; ++run) {
    models.push_back(operators::make_model(operators::ModelKind::DeepONet, config,
                                           *triple.train.stats, run));
  }
  const SuperResRow row =
      superres_evaluate(operators::ModelKind::DeepONet, models, triple.test, triple.test, 0);
  CHECK(row.pct.point == 0.0);
  CHECK(row.pct.ci_low == 0.0);
  CHECK(row.pct.ci_high == 0.0);
  CHECK(row.coarse_rmse_mean == row.fine_rmse_mean);
  CHECK(row.coarse_rmse_mean > 0.0);  // random model, nonzero error
}

TEST_CASE("sweep report bookkeeping") {
  SweepReport report;
  report.pm1 = {0.0, 0.5, 1.0, 1.5, 2.0};
  report.mase_mix0 = {0.1, NAN, 0.2, 3.0, 5.0};
  report.mase_mix20 = {0.1, 0.1, 0.2, 0.5, 0.7};
  report.marker_no_disturbance = 0.4;
  report.marker_threshold = 1.2;

  CHECK(mean_unstable_region(report, report.mase_mix0) == doctest::Approx(4.0));
  CHECK(mean_unstable_region(report, report.mase_mix20) == doctest::Approx(0.6));

  const std::string path = temp_file("psno_sweep.csv");
  save_sweep_csv(report, path);
  std::ifstream in(path);
  std::string all(std::istreambuf_iterator<char>(in), {});
  CHECK(all.find("# marker_no_disturbance=0.4") != std::string::npos);
  CHECK(all.find("# marker_threshold=1.2") != std::string::npos);
  CHECK(all.find("degenerate") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("svg artifacts render") {
  SweepReport report;
  for (int i = 0; i <= 20; ++i) {
    report.pm1.push_back(0.1 * i);
    report.mase_mix0.push_back(0.1 + 0.05 * i);
    report.mase_mix20.push_back(0.08 + 0.01 * i);
  }
  report.marker_no_disturbance = 0.4;
  report.marker_threshold = 1.6;
  const std::string path = temp_file("psno_sweep.svg");
  render_sweep_svg(report, path);
  std::ifstream in(path);
  std::string all(std::istreambuf_iterator<char>(in), {});
  CHECK(all.rfind("<svg", 0) == 0);
  CHECK(all.find("stroke-dasharray") != std::string::npos);
  std::remove(path.c_str());
}
