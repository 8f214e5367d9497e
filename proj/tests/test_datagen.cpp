#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "psno/datagen.hpp"
#include "psno/errors.hpp"
#include "psno/time_grid.hpp"

using namespace psno;
using namespace psno::datagen;

namespace {

constexpr double kPi = std::numbers::pi;

SamplingConfig small_config() {
  SamplingConfig c;
  c.n_train = 12;
  c.n_val = 4;
  c.n_test = 4;
  c.unstable_fraction = 0.25;
  c.seed = 17;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("psno_datagen_" + name)).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config validation") {
  SamplingConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.input_points() == 3);
  CHECK(c.target_points() == 29);

  c.dt = 5e-5;
  CHECK(c.input_points() == 4001);
  CHECK(c.target_points() == 56001);

  c.dt = 0.07;  // does not divide the 0.2 s input window
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = small_config();
  c.unstable_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = small_config();
  c.pm_range = {1.0, 0.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = small_config();
  c.pm_range = {0.0, 5.0};  // beyond the transfer limit
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("stable sampling draws stable records deterministically") {
  const SamplingConfig c = small_config();
  Pcg64 rng_a(c.seed, record_stream(0, 0));
  Pcg64 rng_b(c.seed, record_stream(0, 0));
  const TrajectoryRecord a = sample_stable(rng_a, c);
  const TrajectoryRecord b = sample_stable(rng_b, c);
  CHECK(a.label == smib::StabilityLabel::Stable);
  CHECK(a.input.delta == b.input.delta);
  CHECK(a.target.omega == b.target.omega);
  CHECK(a.params.Pm == b.params.Pm);

  CHECK(a.input.size() == c.input_points());
  CHECK(a.target.size() == c.target_points());
  CHECK(a.input.t0 == 0.0);
  CHECK(a.target.t0 == c.target_start);

  smib::SmibParams undamped = a.params;
  undamped.D = 0.0;
  CHECK(a.params.Pm1 <= smib::pm1_max(undamped));
}

TEST_CASE("stable sampling matches the uniform Pm moments") {
  const SamplingConfig c = small_config();
  double sum = 0.0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    Pcg64 rng(99, record_stream(0, static_cast<std::uint64_t>(i)));
    sum += sample_stable(rng, c).params.Pm;
  }
  const double mean = sum / draws;
  const double se = (2.0 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(draws));
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("unstable sampling stays above the equal-area threshold") {
  SamplingConfig c = small_config();
  c.d_range = {0.0, 0.0};
  for (std::uint64_t i = 0; i < 4; ++i) {
    Pcg64 rng(c.seed, record_stream(1, i));
    const TrajectoryRecord r = sample_unstable(rng, c);
    CHECK(r.label == smib::StabilityLabel::Unstable);
    smib::SmibParams undamped = r.params;
    undamped.D = 0.0;
    CHECK(r.params.Pm1 >= smib::pm1_max(undamped) - 1e-9);
  }
}

TEST_CASE("build_dataset splits labels and stats as configured") {
  SamplingConfig c = small_config();
  const DatasetTriple triple = build_dataset(c);
  REQUIRE(triple.train.records.size() == c.n_train);
  REQUIRE(triple.val.records.size() == c.n_val);
  REQUIRE(triple.test.records.size() == c.n_test);

  std::size_t unstable = 0;
  for (const auto& r : triple.train.records) {
    if (r.label == smib::StabilityLabel::Unstable) ++unstable;
  }
  CHECK(unstable == 3);  // round(0.25 * 12)

  REQUIRE(triple.train.stats.has_value());
  CHECK(triple.train.stats->delta_max == kPi);  // unstable records clip at pi
  CHECK(triple.val.stats->delta_min == triple.train.stats->delta_min);
  CHECK(triple.test.stats->omega_absmax == triple.train.stats->omega_absmax);

  SUBCASE("all-stable config never reaches the clip") {
    c.unstable_fraction = 0.0;
    const DatasetTriple stable_triple = build_dataset(c);
    for (const auto& r : stable_triple.train.records) {
      CHECK(r.label == smib::StabilityLabel::Stable);
    }
    CHECK(stable_triple.train.stats->delta_max < kPi);
  }
}

TEST_CASE("normalization statistics depend only on the training split") {
  SamplingConfig a = small_config();
  SamplingConfig b = a;
  b.n_val = 2;
  b.n_test = 1;
  const auto ta = build_dataset(a);
  const auto tb = build_dataset(b);
  CHECK(ta.train.stats->delta_min == tb.train.stats->delta_min);
  CHECK(ta.train.stats->delta_max == tb.train.stats->delta_max);
  CHECK(ta.train.stats->omega_absmax == tb.train.stats->omega_absmax);
}

TEST_CASE("records are independent of resolution") {
  SamplingConfig coarse = small_config();
  coarse.n_train = 4;
  coarse.n_val = 1;
  coarse.n_test = 2;
  SamplingConfig fine = coarse;
  fine.dt = 5e-5;

  const Dataset coarse_test = build_dataset(coarse).test;
  const Dataset fine_test = build_dataset(fine).test;
  for (std::size_t i = 0; i < coarse_test.records.size(); ++i) {
    const auto& rc = coarse_test.records[i];
    const auto& rf = fine_test.records[i];
    CHECK(rc.params.Pm == rf.params.Pm);
    CHECK(rc.params.Pm1 == rf.params.Pm1);
    CHECK(rc.params.D == rf.params.D);
    CHECK(rc.label == rf.label);
    for (std::size_t k = 0; k < rc.target.size(); ++k) {
      CHECK(std::abs(rf.target.delta[2000 * k] - rc.target.delta[k]) < 1e-9);
    }
  }
}

TEST_CASE("labels are reproducible from a fresh full-horizon integration") {
  const SamplingConfig c = small_config();
  const Dataset train = build_dataset(c).train;
  for (const auto& r : train.records) {
    const double d0 = smib::equilibrium_angle(r.params.Pm, smib::max_power(r.params));
    const auto grid = uniform_grid(0.0, c.dt, grid_points(0.0, c.target_end, c.dt));
    const auto traj = smib::integrate(r.params, smib::MachineState{d0, 0.0}, grid);
    CHECK(smib::classify(traj) == r.label);
  }
}

TEST_CASE("normalize and denormalize") {
  NormalizationStats stats;
  stats.delta_min = -0.5;
  stats.delta_max = kPi;
  stats.omega_absmax = 4.0;

  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = 0.1;
  traj.delta = {-0.5, 0.0, kPi, kPi + 2.0};  // last value exercises the clip
  traj.omega = {-4.0, 0.0, 2.0, 4.0};
  const Tensor channels = normalize_trajectory(traj, stats);
  CHECK(channels.at2(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(channels.at2(2, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(channels.at2(3, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(channels.at2(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));

  const Trajectory back = denormalize_trajectory(channels, stats, traj.t0, traj.dt);
  for (std::size_t k = 0; k < 3; ++k) {  // exact below the clip
    CHECK(std::abs(back.delta[k] - traj.delta[k]) < 1e-12);
    CHECK(std::abs(back.omega[k] - traj.omega[k]) < 1e-12);
  }

  SUBCASE("degenerate stats are rejected") {
    stats.delta_max = stats.delta_min;
    CHECK_THROWS_AS(normalize_trajectory(traj, stats), NumericalError);
  }
}

TEST_CASE("dataset files round trip bit-exactly") {
  SamplingConfig c = small_config();
  c.n_train = 3;
  c.n_val = 1;
  c.n_test = 1;
  const DatasetTriple triple = build_dataset(c);
  const std::string path = temp_path("roundtrip.ds");
  save_dataset(triple.train, path);
  const Dataset loaded = load_dataset(path);

  REQUIRE(loaded.records.size() == triple.train.records.size());
  CHECK(loaded.config.seed == c.seed);
  CHECK(loaded.stats->delta_min == triple.train.stats->delta_min);
  for (std::size_t i = 0; i < loaded.records.size(); ++i) {
    CHECK(loaded.records[i].input.delta == triple.train.records[i].input.delta);
    CHECK(loaded.records[i].target.omega == triple.train.records[i].target.omega);
    CHECK(loaded.records[i].params.Pm1 == triple.train.records[i].params.Pm1);
    CHECK(loaded.records[i].label == triple.train.records[i].label);
  }

  const std::string again = temp_path("roundtrip2.ds");
  save_dataset(loaded, again);
  CHECK(read_bytes(path) == read_bytes(again));
  std::remove(path.c_str());
  std::remove(again.c_str());
}

TEST_CASE("generation is byte deterministic") {
  SamplingConfig c = small_config();
  c.n_train = 4;
  c.n_val = 1;
  c.n_test = 1;
  const std::string a = temp_path("det_a.ds"), b = temp_path("det_b.ds");
  save_dataset(build_dataset(c).train, a);
  save_dataset(build_dataset(c).train, b);
  CHECK(read_bytes(a) == read_bytes(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("load errors are distinct") {
  SamplingConfig c = small_config();
  c.n_train = 1;
  c.n_val = 1;
  c.n_test = 1;
  const Dataset ds = build_dataset(c).train;
  const std::string path = temp_path("errors.ds");
  save_dataset(ds, path);
  std::string bytes = read_bytes(path);

  SUBCASE("magic mismatch") {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(path, std::ios::binary) << bad;
    CHECK_THROWS_AS(load_dataset(path), MagicMismatchError);
  }
  SUBCASE("version mismatch") {
    std::string bad = bytes;
    bad[7] = '9';
    std::ofstream(path, std::ios::binary) << bad;
    CHECK_THROWS_AS(load_dataset(path), VersionMismatchError);
  }
  SUBCASE("truncation") {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 16);
    CHECK_THROWS_AS(load_dataset(path), TruncatedFileError);
  }
  std::remove(path.c_str());
}

TEST_CASE("empty dataset round trips") {
  SamplingConfig c = small_config();
  c.n_train = 0;
  c.n_val = 0;
  c.n_test = 0;
  const DatasetTriple triple = build_dataset(c);
  CHECK_FALSE(triple.train.stats.has_value());
  const std::string path = temp_path("empty.ds");
  save_dataset(triple.test, path);
  const Dataset loaded = load_dataset(path);
  CHECK(loaded.records.empty());
  CHECK_FALSE(loaded.stats.has_value());
  std::remove(path.c_str());
}
