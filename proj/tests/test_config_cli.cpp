#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "psno/config.hpp"
#include "psno/datagen.hpp"
#include "psno/errors.hpp"

using namespace psno;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Scratch directory shared by the pipeline subcases.
fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "psno_cli_test";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PSNO_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out);
  out << text;
}

std::string tiny_model_config() {
  return R"({
    "model": {"kind": "fno", "config": {"width": 4, "layers": 1, "modes": 3,
                                        "projection_hidden": 6}},
    "training": {"epochs": 2, "batch_size": 4}
  })";
}

}  // namespace

TEST_CASE("run config parsing") {
  SUBCASE("defaults") {
    const auto config = config::parse_run_config(json::object());
    CHECK(config.sampling.n_train == 8000);
    CHECK(config.sampling.dt == 0.1);
    CHECK(config.eval.runs == 20);
    CHECK(config.train.batch_size == 64);
  }
  SUBCASE("sections populate") {
    const auto config = config::parse_run_config(json::parse(R"({
      "sampling": {"dt": 0.05, "n_train": 10, "unstable_fraction": 0.2, "seed": 3},
      "training": {"epochs": 7, "lr": 0.01},
      "evaluation": {"runs": 5, "sweep_points": 11},
      "paths": {"out_dir": "/tmp/x"},
      "seeds": {"train": 9}
    })"));
    CHECK(config.sampling.dt == 0.05);
    CHECK(config.sampling.seed == 3);
    CHECK(config.train.epochs == 7);
    CHECK(config.train.adam.lr == 0.01);
    CHECK(config.train.seed == 9);
    CHECK(config.eval.sweep_points == 11);
    CHECK(config.out_dir == "/tmp/x");
  }
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(config::parse_run_config(json::parse(R"({"samplig": {}})")), ConfigError);
    CHECK_THROWS_AS(config::parse_run_config(json::parse(R"({"sampling": {"dtt": 1}})")),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_run_config(json::parse(R"({"training": {"momentum": 1}})")),
                    ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config(json::parse(
            R"({"model": {"kind": "fno", "config": {"branch_hidden": [4]}}})")),
        ConfigError);
  }
  SUBCASE("PSNO_SEED overrides every seed") {
    auto config = config::parse_run_config(json::parse(R"({"seeds": {"data": 1, "train": 2}})"));
    setenv("PSNO_SEED", "77", 1);
    config::apply_env_seed(config);
    unsetenv("PSNO_SEED");
    CHECK(config.sampling.seed == 77);
    CHECK(config.train.seed == 77);
    CHECK(config.seeds.bootstrap == 77);
  }
}

TEST_CASE("cli pipeline") {
  const fs::path dir = work_dir();
  const std::string data = (dir / "toy").string();
  const fs::path config_path = dir / "run.json";
  write_file(config_path, tiny_model_config());

  SUBCASE("generate writes datasets and an accurate summary") {
    CHECK(run_cli("generate --out " + data +
                  " --n-train 8 --n-val 2 --n-test 2 --unstable-fraction 0.25 --seed 5") == 0);
    REQUIRE(fs::exists(data + ".train.ds"));
    REQUIRE(fs::exists(data + ".summary.json"));
    json summary;
    std::ifstream(data + ".summary.json") >> summary;
    CHECK(summary["input_length"] == 3);
    CHECK(summary["target_length"] == 29);
    CHECK(summary["train"]["count"] == 8);
    CHECK(summary["train"]["unstable"] == 2);  // round(0.25 * 8)

    // Idempotence: a second run produces byte-identical datasets.
    const auto bytes = [&](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string before = bytes(data + ".train.ds");
    CHECK(run_cli("generate --out " + data +
                  " --n-train 8 --n-val 2 --n-test 2 --unstable-fraction 0.25 --seed 5") == 0);
    CHECK(bytes(data + ".train.ds") == before);
  }

  SUBCASE("train gates the parameter budget") {
    const std::string ckpt = (dir / "tiny.ckpt").string();
    CHECK(run_cli("train --config " + config_path.string() + " --model fno --data " + data +
                  " --out " + ckpt) == 2);
    CHECK(run_cli("train --config " + config_path.string() + " --model fno --data " + data +
                  " --out " + ckpt + " --allow-any-size --report " +
                  (dir / "report.csv").string()) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(dir / "report.csv"));
  }

  SUBCASE("train reports missing data as an io error") {
    CHECK(run_cli("train --config " + config_path.string() +
                  " --model fno --data /nonexistent/prefix --out " + (dir / "x.ckpt").string() +
                  " --allow-any-size") == 3);
  }

  SUBCASE("eval runs from checkpoints and rejects mismatched datasets") {
    const std::string ckpt = (dir / "tiny.ckpt").string();
    REQUIRE(fs::exists(ckpt));
    CHECK(run_cli("eval --coarse " + data + " --fine " + data + " --checkpoint " + ckpt +
                  " --out " + (dir / "superres.csv").string()) == 0);
    CHECK(fs::exists(dir / "superres.csv"));

    const std::string other = (dir / "other").string();
    CHECK(run_cli("generate --out " + other + " --n-train 2 --n-val 1 --n-test 2 --seed 6") == 0);
    CHECK(run_cli("eval --coarse " + data + " --fine " + other + " --checkpoint " + ckpt) == 2);
  }

  SUBCASE("sweep and report emit their artifacts") {
    const std::string ckpt = (dir / "tiny.ckpt").string();
    REQUIRE(fs::exists(ckpt));
    const fs::path sweep_cfg = dir / "sweep.json";
    write_file(sweep_cfg, R"({"evaluation": {"sweep_points": 9}})");
    CHECK(run_cli("sweep --config " + sweep_cfg.string() + " --mix0 " + ckpt + " --mix20 " +
                  ckpt + " --out " + (dir / "sweep.csv").string()) == 0);
    CHECK(fs::exists(dir / "sweep.csv"));

    CHECK(run_cli("report --data " + data + " --checkpoint " + ckpt + " --records 1" +
                  " --sweep-csv " + (dir / "sweep.csv").string() + " --out-dir " +
                  (dir / "report_out").string()) == 0);
    CHECK(fs::exists(dir / "report_out" / "overlay_fno.svg"));
    CHECK(fs::exists(dir / "report_out" / "sweep.svg"));
  }

  SUBCASE("usage errors exit with 2") {
    CHECK(run_cli("train --model warp-drive --data " + data + " --allow-any-size") == 2);
  }
}
