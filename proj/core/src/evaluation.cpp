#include "psno/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "psno/errors.hpp"
#include "psno/parallel.hpp"
#include "psno/rng.hpp"
#include "psno/time_grid.hpp"

namespace psno::evaluation {

double rmse(std::span<const Tensor> preds, std::span<const Tensor> targets) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw ConfigError("rmse needs matching nonempty prediction/target sets");
  }
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!preds[i].same_shape(targets[i])) throw ConfigError("rmse shape mismatch");
    for (std::size_t j = 0; j < preds[i].size(); ++j) {
      const double e = preds[i][j] - targets[i][j];
      sum_sq += e * e;
    }
    count += preds[i].size();
  }
  if (count == 0) throw ConfigError("rmse over empty tensors");
  return std::sqrt(sum_sq / static_cast<double>(count));
}

MaseParts mase_parts(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || !pred.same_shape(target)) throw ConfigError("mase shape mismatch");
  const std::size_t n = pred.dim(0), ch = pred.dim(1);
  if (n < 2) throw ConfigError("mase needs at least two samples");
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    // Matching loop structure keeps the persistence predictor at exactly 1:
    // its forecast errors equal the baseline increments term by term.
    for (std::size_t t = 0; t < n; ++t) num += std::abs(pred.at2(t, c) - target.at2(t, c));
    for (std::size_t t = 1; t < n; ++t) den += std::abs(target.at2(t, c) - target.at2(t - 1, c));
  }
  const double scale = 1.0 / static_cast<double>(n * ch);
  return MaseParts{num * scale, den * scale};
}

double mase(const Tensor& pred, const Tensor& target) {
  const MaseParts parts = mase_parts(pred, target);
  return parts.numerator / std::max(parts.denominator, 1e-12);
}

double standard_error(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

PercentDifference percent_difference(std::span<const double> coarse_per_run,
                                     std::span<const double> fine_per_run, std::uint64_t seed,
                                     std::size_t resamples) {
  const std::size_t runs = coarse_per_run.size();
  if (runs == 0 || runs != fine_per_run.size()) {
    throw ConfigError("percent_difference needs equal nonempty run vectors");
  }
  auto statistic = [&](std::span<const std::size_t> idx) {
    double mc = 0.0, mf = 0.0;
    for (std::size_t i : idx) {
      mc += coarse_per_run[i];
      mf += fine_per_run[i];
    }
    mc /= static_cast<double>(idx.size());
    mf /= static_cast<double>(idx.size());
    if (mc == 0.0) throw NumericalError("zero coarse RMSE mean in percent difference");
    return 100.0 * (mf - mc) / mc;
  };

  std::vector<std::size_t> all(runs);
  std::iota(all.begin(), all.end(), 0);
  PercentDifference out;
  out.point = statistic(all);

  Pcg64 rng(seed, label_stream("bootstrap"));
  std::vector<double> stats(resamples);
  std::vector<std::size_t> sample(runs);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < runs; ++i) {
      sample[i] = static_cast<std::size_t>(rng.next_u64() % runs);
    }
    stats[b] = statistic(sample);
  }
  std::sort(stats.begin(), stats.end());
  auto quantile = [&stats](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, stats.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * stats[lo] + w * stats[hi];
  };
  out.ci_low = quantile(0.025);
  out.ci_high = quantile(0.975);
  return out;
}

void check_shared_params(const datagen::Dataset& a, const datagen::Dataset& b) {
  if (a.config.seed != b.config.seed) {
    throw ConfigError("datasets must share SMIB parameters: seeds differ");
  }
  if (a.records.size() != b.records.size()) {
    throw ConfigError("datasets must share SMIB parameters: record counts differ");
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& pa = a.records[i].params;
    const auto& pb = b.records[i].params;
    if (pa.E != pb.E || pa.V != pb.V || pa.X != pb.X || pa.H != pb.H || pa.D != pb.D ||
        pa.f0 != pb.f0 || pa.Pm != pb.Pm || pa.Pm1 != pb.Pm1) {
      throw ConfigError("datasets must share SMIB parameters: record " + std::to_string(i) +
                        " differs");
    }
  }
}

double test_rmse(const operators::OperatorModel& model, const datagen::Dataset& test) {
  if (test.records.empty()) throw ConfigError("empty test split");
  const datagen::SamplingConfig& cfg = test.config;
  const std::vector<double> query = uniform_grid(cfg.target_start, cfg.dt, cfg.target_points());
  std::vector<Tensor> inputs, targets;
  inputs.reserve(test.records.size());
  targets.reserve(test.records.size());
  for (const auto& record : test.records) {
    inputs.push_back(datagen::normalize_trajectory(record.input, model.norm_stats));
    targets.push_back(datagen::normalize_trajectory(record.target, model.norm_stats));
  }
  const std::vector<Tensor> preds = model.predict_many(inputs, 0.0, cfg.dt, query);
  return rmse(preds, targets);
}

SuperResRow superres_evaluate(operators::ModelKind kind,
                              const std::vector<operators::OperatorModel>& models,
                              const datagen::Dataset& coarse_test,
                              const datagen::Dataset& fine_test, std::uint64_t bootstrap_seed) {
  check_shared_params(coarse_test, fine_test);
  SuperResRow row;
  row.kind = kind;
  for (const auto& model : models) {
    row.coarse_per_run.push_back(test_rmse(model, coarse_test));
    row.fine_per_run.push_back(test_rmse(model, fine_test));
  }
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  row.coarse_rmse_mean = mean(row.coarse_per_run);
  row.coarse_rmse_se = standard_error(row.coarse_per_run);
  row.fine_rmse_mean = mean(row.fine_per_run);
  row.fine_rmse_se = standard_error(row.fine_per_run);
  row.pct = percent_difference(row.coarse_per_run, row.fine_per_run, bootstrap_seed);
  return row;
}

SuperResResult superres_experiment(operators::ModelKind kind,
                                   const operators::ModelConfig& config,
                                   const datagen::DatasetTriple& coarse,
                                   const datagen::Dataset& fine_test,
                                   const SuperResOptions& options) {
  if (options.runs == 0) throw ConfigError("superres needs at least one run");
  check_shared_params(coarse.test, fine_test);

  SuperResResult result;
  result.models.resize(options.runs);
  parallel_for(options.runs, options.jobs, [&](std::size_t run) {
    training::TrainConfig tc = options.train;
    tc.seed = options.train.seed + run;
    auto [model, report] = training::train(kind, config, coarse.train, coarse.val, tc);
    if (options.verbose) {
      std::fprintf(stderr, "[superres %s] run %zu best_val %.5f (epoch %zu)\n",
                   operators::to_string(kind), run, report.best_val_loss, report.best_epoch);
    }
    result.models[run] = std::move(model);
  });
  result.row = superres_evaluate(kind, result.models, coarse.test, fine_test,
                                 options.bootstrap_seed);
  return result;
}

void save_superres_csv(const SuperResReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "model,coarse_rmse_mean,coarse_rmse_se,fine_rmse_mean,fine_rmse_se,pct_diff,ci_low,ci_"
         "high\n";
  out.precision(17);
  for (const SuperResRow& row : report.rows) {
    out << operators::to_string(row.kind) << ',' << row.coarse_rmse_mean << ','
        << row.coarse_rmse_se << ',' << row.fine_rmse_mean << ',' << row.fine_rmse_se << ','
        << row.pct.point << ',' << row.pct.ci_low << ',' << row.pct.ci_high << '\n';
  }
  out << "# runs=" << report.runs << " trajectories=" << report.trajectories << '\n';
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace psno::evaluation
