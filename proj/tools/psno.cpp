// psno: batch pipeline for the SMIB operator-learning benchmark.
// Subcommands: generate | train | eval | sweep | report.
// Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 numerical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "psno/config.hpp"
#include "psno/datagen.hpp"
#include "psno/errors.hpp"
#include "psno/evaluation.hpp"
#include "psno/operators.hpp"
#include "psno/parallel.hpp"
#include "psno/time_grid.hpp"
#include "psno/training.hpp"

namespace {

using nlohmann::json;
using psno::config::RunConfig;

constexpr std::size_t kParamBudget = 700000;
constexpr double kBudgetSlack = 0.10;

struct CommonOpts {
  std::string config_path;
  unsigned jobs = 1;
};

RunConfig resolve_config(const CommonOpts& common) {
  RunConfig config;
  if (!common.config_path.empty()) config = psno::config::load_run_config(common.config_path);
  psno::config::apply_env_seed(config);
  return config;
}

json split_summary(const psno::datagen::Dataset& ds) {
  std::size_t stable = 0, unstable = 0;
  for (const auto& r : ds.records) {
    (r.label == psno::smib::StabilityLabel::Stable ? stable : unstable) += 1;
  }
  return json{{"count", ds.records.size()}, {"stable", stable}, {"unstable", unstable}};
}

int cmd_generate(const CommonOpts& common, RunConfig config, const std::string& out_prefix) {
  config.sampling.validate();
  const psno::datagen::DatasetTriple triple =
      psno::datagen::build_dataset(config.sampling, common.jobs);
  psno::datagen::save_dataset(triple.train, out_prefix + ".train.ds");
  psno::datagen::save_dataset(triple.val, out_prefix + ".val.ds");
  psno::datagen::save_dataset(triple.test, out_prefix + ".test.ds");

  json summary;
  summary["train"] = split_summary(triple.train);
  summary["val"] = split_summary(triple.val);
  summary["test"] = split_summary(triple.test);
  summary["input_length"] = config.sampling.input_points();
  summary["target_length"] = config.sampling.target_points();
  summary["dt"] = config.sampling.dt;
  summary["seed"] = config.sampling.seed;
  if (triple.train.stats) {
    summary["stats"] = {{"delta_min", triple.train.stats->delta_min},
                        {"delta_max", triple.train.stats->delta_max},
                        {"omega_absmax", triple.train.stats->omega_absmax}};
  } else {
    summary["stats"] = nullptr;
  }
  std::ofstream out(out_prefix + ".summary.json");
  if (!out) throw psno::IoError("cannot write " + out_prefix + ".summary.json");
  out << summary.dump(2) << '\n';
  std::cout << "wrote " << out_prefix << ".{train,val,test}.ds ("
            << triple.train.records.size() << "/" << triple.val.records.size() << "/"
            << triple.test.records.size() << " records)\n";
  return 0;
}

int cmd_train(const CommonOpts& common, RunConfig config, const std::string& kind_name,
              const std::string& data_prefix, const std::string& out_path,
              const std::string& report_path, bool allow_any_size) {
  const auto kind = psno::operators::model_kind_from_string(kind_name);
  const psno::operators::ModelConfig model_config = config.resolve_model_config(kind);

  const std::size_t count = psno::operators::count_params(kind, model_config);
  const auto lo = static_cast<std::size_t>(kParamBudget * (1.0 - kBudgetSlack));
  const auto hi = static_cast<std::size_t>(kParamBudget * (1.0 + kBudgetSlack));
  std::cout << "parameters: " << count << '\n';
  if (!allow_any_size && (count < lo || count > hi)) {
    throw psno::ConfigError("parameter count " + std::to_string(count) +
                            " outside the reference budget [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]; pass --allow-any-size to override");
  }

  const auto train_split = psno::datagen::load_dataset(data_prefix + ".train.ds");
  const auto val_split = psno::datagen::load_dataset(data_prefix + ".val.ds");
  auto [model, report] = psno::training::train(kind, model_config, train_split, val_split,
                                               config.train);
  psno::operators::save_checkpoint(model, out_path);
  if (!report_path.empty()) psno::training::save_report_csv(report, report_path);
  std::cout << "best validation loss: " << report.best_val_loss << " (epoch "
            << report.best_epoch << ")\n";
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

std::vector<psno::operators::OperatorModel> load_checkpoints(
    const std::vector<std::string>& paths) {
  std::vector<psno::operators::OperatorModel> models;
  models.reserve(paths.size());
  for (const std::string& p : paths) models.push_back(psno::operators::load_checkpoint(p));
  return models;
}

int cmd_eval(const CommonOpts& common, RunConfig config, const std::string& coarse_prefix,
             const std::string& fine_prefix, const std::vector<std::string>& checkpoints,
             const std::string& out_csv) {
  const auto coarse_test = psno::datagen::load_dataset(coarse_prefix + ".test.ds");
  const auto fine_test = psno::datagen::load_dataset(fine_prefix + ".test.ds");
  const auto models = load_checkpoints(checkpoints);
  if (models.empty()) throw psno::ConfigError("eval needs at least one --checkpoint");
  for (const auto& m : models) {
    if (m.kind != models.front().kind) {
      throw psno::ConfigError("all eval checkpoints must share one model kind");
    }
  }
  psno::evaluation::SuperResReport report;
  report.rows.push_back(psno::evaluation::superres_evaluate(
      models.front().kind, models, coarse_test, fine_test, config.seeds.bootstrap));
  report.runs = models.size();
  report.trajectories = coarse_test.records.size();
  psno::evaluation::save_superres_csv(report, out_csv);
  const auto& row = report.rows.front();
  std::cout << psno::operators::to_string(row.kind) << ": coarse " << row.coarse_rmse_mean
            << " fine " << row.fine_rmse_mean << " pct " << row.pct.point << " ("
            << row.pct.ci_low << ", " << row.pct.ci_high << ")\n";
  std::cout << "wrote " << out_csv << '\n';
  return 0;
}

int cmd_sweep(const CommonOpts& common, RunConfig config,
              const std::vector<std::string>& mix0_paths,
              const std::vector<std::string>& mix20_paths, const std::string& out_csv) {
  psno::evaluation::SweepConfig sweep;
  sweep.pm = config.eval.sweep_pm;
  sweep.d = config.eval.sweep_d;
  sweep.grid_points = config.eval.sweep_points;
  sweep.base = config.sampling;
  const auto report = psno::evaluation::regime_sweep(load_checkpoints(mix0_paths),
                                                     load_checkpoints(mix20_paths), sweep);
  psno::evaluation::save_sweep_csv(report, out_csv);
  std::cout << "threshold marker: " << report.marker_threshold << '\n';
  std::cout << "wrote " << out_csv << '\n';
  return 0;
}

psno::datagen::Trajectory denorm_prediction(const psno::operators::OperatorModel& model,
                                            const psno::Tensor& pred, double t0, double dt) {
  return psno::datagen::denormalize_trajectory(pred, model.norm_stats, t0, dt);
}

int cmd_report(const CommonOpts& common, RunConfig config, const std::string& data_prefix,
               const std::vector<std::string>& checkpoints, const std::string& sweep_csv,
               const std::vector<std::string>& superres_csvs, const std::string& out_dir,
               std::size_t n_records) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  if (!data_prefix.empty() && !checkpoints.empty()) {
    const auto test = psno::datagen::load_dataset(data_prefix + ".test.ds");
    const auto& cfg = test.config;
    const std::size_t shown = std::min<std::size_t>(n_records, test.records.size());
    const std::vector<double> query =
        psno::uniform_grid(cfg.target_start, cfg.dt, cfg.target_points());
    for (const std::string& path : checkpoints) {
      const auto model = psno::operators::load_checkpoint(path);
      std::vector<psno::evaluation::OverlayPanel> panels;
      for (std::size_t i = 0; i < shown; ++i) {
        const auto& record = test.records[i];
        psno::evaluation::OverlayPanel panel;
        panel.title = std::string(psno::operators::to_string(model.kind)) + " record " +
                      std::to_string(i) + " (" + psno::smib::to_string(record.label) + ")";
        // Full-horizon ground truth for context.
        psno::smib::SmibParams params = record.params;
        const double delta0 =
            psno::smib::equilibrium_angle(params.Pm, psno::smib::max_power(params));
        const auto sol = psno::smib::solve(params, psno::smib::MachineState{delta0, 0.0}, 0.0,
                                           cfg.target_end);
        panel.truth_full = sol.sample(0.0, cfg.dt, psno::grid_points(0.0, cfg.target_end, cfg.dt));
        panel.input = record.input;
        panel.prediction =
            denorm_prediction(model, model.predict(record.input, query), cfg.target_start, cfg.dt);
        panels.push_back(std::move(panel));
      }
      const std::string out =
          (fs::path(out_dir) / (std::string("overlay_") +
                                psno::operators::to_string(model.kind) + ".svg"))
              .string();
      psno::evaluation::render_overlay_svg(panels, out);
      std::cout << "wrote " << out << '\n';
    }
  }

  if (!sweep_csv.empty()) {
    // Re-render the sweep curves from a saved CSV.
    std::ifstream in(sweep_csv);
    if (!in) throw psno::IoError("cannot open " + sweep_csv);
    psno::evaluation::SweepReport report;
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("# marker_no_disturbance=", 0) == 0) {
        report.marker_no_disturbance = std::stod(line.substr(24));
      } else if (line.rfind("# marker_threshold=", 0) == 0) {
        report.marker_threshold = std::stod(line.substr(19));
      } else if (!line.empty() && line[0] != '#' && line.rfind("pm1,", 0) != 0) {
        double pm1 = 0.0, m0 = NAN, m20 = NAN;
        std::size_t pos = 0;
        const auto next = [&line, &pos]() {
          const std::size_t comma = line.find(',', pos);
          const std::string field = line.substr(pos, comma - pos);
          pos = comma == std::string::npos ? line.size() : comma + 1;
          return field;
        };
        pm1 = std::stod(next());
        const std::string f0 = next();
        const std::string f20 = next();
        if (!f0.empty()) m0 = std::stod(f0);
        if (!f20.empty()) m20 = std::stod(f20);
        report.pm1.push_back(pm1);
        report.mase_mix0.push_back(m0);
        report.mase_mix20.push_back(m20);
      }
    }
    const std::string out = (fs::path(out_dir) / "sweep.svg").string();
    psno::evaluation::render_sweep_svg(report, out);
    std::cout << "wrote " << out << '\n';
  }

  if (!superres_csvs.empty()) {
    // Combined summary table (one row per model) from per-model CSVs.
    const std::string out = (fs::path(out_dir) / "summary.csv").string();
    std::ofstream merged(out);
    if (!merged) throw psno::IoError("cannot write " + out);
    merged << "model,coarse_rmse_mean,coarse_rmse_se,fine_rmse_mean,fine_rmse_se,pct_diff,ci_low,"
              "ci_high\n";
    for (const std::string& path : superres_csvs) {
      std::ifstream in(path);
      if (!in) throw psno::IoError("cannot open " + path);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') merged << line << '\n';
      }
    }
    std::cout << "wrote " << out << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator-learning benchmark for SMIB transient dynamics"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--jobs", common.jobs, "Worker thread bound (default 1)");

  // generate
  auto* gen = app.add_subcommand("generate", "Sample SMIB trajectories into dataset files");
  std::string out_prefix = "dataset";
  double opt_dt = -1.0, opt_unstable = -1.0;
  std::int64_t opt_ntrain = -1, opt_nval = -1, opt_ntest = -1, opt_seed = -1;
  gen->add_option("--config", common.config_path, "Run config JSON");
  gen->add_option("--out", out_prefix, "Output path prefix")->required();
  gen->add_option("--dt", opt_dt, "Sample spacing in seconds (default 0.1)");
  gen->add_option("--unstable-fraction", opt_unstable,
                  "Fraction of unstable records per split (default 0)");
  gen->add_option("--n-train", opt_ntrain, "Training records (default 8000)");
  gen->add_option("--n-val", opt_nval, "Validation records (default 1000)");
  gen->add_option("--n-test", opt_ntest, "Test records (default 200)");
  gen->add_option("--seed", opt_seed, "Data seed (default 0)");

  // train
  auto* train = app.add_subcommand("train", "Train one surrogate model");
  std::string model_name, data_prefix, ckpt_out = "model.ckpt", report_csv;
  std::int64_t opt_epochs = -1, opt_batch = -1, opt_train_seed = -1;
  double opt_lr = -1.0;
  bool allow_any_size = false, verbose = false;
  train->add_option("--config", common.config_path, "Run config JSON");
  train->add_option("--model", model_name, "deeponet|fno|lnode-fixed|lnode-adaptive")->required();
  train->add_option("--data", data_prefix, "Dataset path prefix")->required();
  train->add_option("--out", ckpt_out, "Checkpoint output path");
  train->add_option("--report", report_csv, "Training report CSV path");
  train->add_option("--epochs", opt_epochs, "Epochs (default 60; 600 for deeponet)");
  train->add_option("--batch", opt_batch, "Batch size (default 64)");
  train->add_option("--lr", opt_lr, "Adam learning rate (default 1e-3)");
  train->add_option("--seed", opt_train_seed, "Training seed (default 0)");
  train->add_flag("--allow-any-size", allow_any_size,
                  "Skip the ~700k parameter budget check");
  train->add_flag("--verbose", verbose, "Per-epoch progress on stderr");

  // eval
  auto* eval = app.add_subcommand("eval", "Zero-shot super-resolution evaluation");
  std::string coarse_prefix, fine_prefix, eval_csv = "superres.csv";
  std::vector<std::string> checkpoints;
  eval->add_option("--config", common.config_path, "Run config JSON");
  eval->add_option("--coarse", coarse_prefix, "Coarse dataset prefix")->required();
  eval->add_option("--fine", fine_prefix, "Fine dataset prefix")->required();
  eval->add_option("--checkpoint", checkpoints, "Checkpoint path (repeat per run)")->required();
  eval->add_option("--out", eval_csv, "Report CSV path");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Disturbance sweep with MASE per training mix");
  std::vector<std::string> mix0_paths, mix20_paths;
  std::string sweep_csv_out = "sweep.csv";
  sweep->add_option("--config", common.config_path, "Run config JSON");
  sweep->add_option("--mix0", mix0_paths, "Checkpoints trained on 0% unstable data")->required();
  sweep->add_option("--mix20", mix20_paths, "Checkpoints trained on 20% unstable data")
      ->required();
  sweep->add_option("--out", sweep_csv_out, "Sweep CSV path");

  // report
  auto* rep = app.add_subcommand("report", "Render SVG overlays and summary tables");
  std::string rep_data, rep_sweep_csv, rep_out_dir = "report";
  std::vector<std::string> rep_ckpts, rep_superres;
  std::size_t rep_records = 3;
  rep->add_option("--config", common.config_path, "Run config JSON");
  rep->add_option("--data", rep_data, "Dataset prefix for overlay ground truth");
  rep->add_option("--checkpoint", rep_ckpts, "Checkpoints to render overlays for");
  rep->add_option("--records", rep_records, "Test records per overlay (default 3)");
  rep->add_option("--sweep-csv", rep_sweep_csv, "Sweep CSV to render");
  rep->add_option("--superres-csv", rep_superres, "Per-model eval CSVs to merge");
  rep->add_option("--out-dir", rep_out_dir, "Artifact directory (default ./report)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = resolve_config(common);
    // Flag overrides on top of config-file values.
    if (opt_dt > 0) config.sampling.dt = opt_dt;
    if (opt_unstable >= 0) config.sampling.unstable_fraction = opt_unstable;
    if (opt_ntrain >= 0) config.sampling.n_train = static_cast<std::size_t>(opt_ntrain);
    if (opt_nval >= 0) config.sampling.n_val = static_cast<std::size_t>(opt_nval);
    if (opt_ntest >= 0) config.sampling.n_test = static_cast<std::size_t>(opt_ntest);
    if (opt_seed >= 0) {
      config.sampling.seed = static_cast<std::uint64_t>(opt_seed);
      config.seeds.data = config.sampling.seed;
    }
    if (opt_epochs >= 0) config.train.epochs = static_cast<std::size_t>(opt_epochs);
    if (opt_batch > 0) config.train.batch_size = static_cast<std::size_t>(opt_batch);
    if (opt_lr > 0) config.train.adam.lr = opt_lr;
    if (opt_train_seed >= 0) config.train.seed = static_cast<std::uint64_t>(opt_train_seed);
    config.train.verbose = config.train.verbose || verbose;

    if (gen->parsed()) return cmd_generate(common, std::move(config), out_prefix);
    if (train->parsed()) {
      return cmd_train(common, std::move(config), model_name, data_prefix, ckpt_out, report_csv,
                       allow_any_size);
    }
    if (eval->parsed()) {
      return cmd_eval(common, std::move(config), coarse_prefix, fine_prefix, checkpoints,
                      eval_csv);
    }
    if (sweep->parsed()) {
      return cmd_sweep(common, std::move(config), mix0_paths, mix20_paths, sweep_csv_out);
    }
    if (rep->parsed()) {
      return cmd_report(common, std::move(config), rep_data, rep_ckpts, rep_sweep_csv,
                        rep_superres, rep_out_dir, rep_records);
    }
    return 2;
  } catch (const psno::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const psno::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const psno::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
