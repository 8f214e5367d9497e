#include "psno/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "psno/errors.hpp"
#include "psno/rng.hpp"
#include "psno/time_grid.hpp"

namespace psno::training {

using operators::ModelKind;
using operators::OperatorModel;

std::size_t default_epochs(ModelKind kind) {
  return kind == ModelKind::DeepONet ? 600 : 60;
}

double h1_loss(const Tensor& pred, const Tensor& target, double dt) {
  if (pred.rank() != 2 || !pred.same_shape(target)) throw ConfigError("h1_loss shape mismatch");
  numcore::Tape tape;
  Tensor p3({std::size_t{1}, pred.dim(0), pred.dim(1)}, std::vector<double>(pred.values()));
  Tensor t3({std::size_t{1}, target.dim(0), target.dim(1)}, std::vector<double>(target.values()));
  const numcore::Var v = tape.h1_loss(tape.constant(std::move(p3)), t3, dt);
  return tape.value(v)[0];
}

namespace {

struct PreparedSplit {
  std::vector<Tensor> norm_inputs;  // per record, (n_in, 2)
  Tensor targets;                    // (N, n_tgt, 2)
  double input_t0 = 0.0, input_dt = 0.0;
  std::vector<double> query_times;
  double dt = 0.0;
};

PreparedSplit prepare(const datagen::Dataset& split, const datagen::NormalizationStats& stats) {
  PreparedSplit out;
  if (split.records.empty()) throw ConfigError("empty dataset split");
  const datagen::SamplingConfig& cfg = split.config;
  const std::size_t n_tgt = cfg.target_points();
  out.query_times = uniform_grid(cfg.target_start, cfg.dt, n_tgt);
  out.dt = cfg.dt;
  out.input_t0 = 0.0;
  out.input_dt = cfg.dt;
  out.norm_inputs.reserve(split.records.size());
  out.targets = Tensor({split.records.size(), n_tgt, std::size_t{2}});
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    const datagen::TrajectoryRecord& r = split.records[i];
    out.norm_inputs.push_back(datagen::normalize_trajectory(r.input, stats));
    const Tensor tgt = datagen::normalize_trajectory(r.target, stats);
    std::copy(tgt.values().begin(), tgt.values().end(), out.targets.data() + i * tgt.size());
  }
  return out;
}

Tensor gather_targets(const Tensor& all, const std::vector<std::size_t>& indices) {
  const std::size_t n_tgt = all.dim(1), ch = all.dim(2);
  Tensor out({indices.size(), n_tgt, ch});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(all.data() + indices[b] * n_tgt * ch, n_tgt * ch, out.data() + b * n_tgt * ch);
  }
  return out;
}

// Mean loss over a split without gradients.
double split_loss(const OperatorModel& model, const PreparedSplit& split, std::size_t batch_size) {
  const std::size_t n = split.norm_inputs.size();
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<std::size_t> indices(end - start);
    std::iota(indices.begin(), indices.end(), start);
    numcore::Tape tape;
    const auto bound = operators::bind_params(tape, model.params, /*requires_grad=*/false);
    const Tensor inputs = operators::batch_inputs_for(model, split.norm_inputs, indices,
                                                      split.input_t0, split.input_dt,
                                                      split.query_times);
    const numcore::Var pred = operators::model_forward(tape, model, bound, inputs,
                                                       split.query_times);
    const numcore::Var loss =
        tape.h1_loss(pred, gather_targets(split.targets, indices), split.dt);
    total += tape.value(loss)[0] * static_cast<double>(end - start);
  }
  return total / static_cast<double>(n);
}

}  // namespace

std::pair<OperatorModel, TrainReport> train(ModelKind kind,
                                            const operators::ModelConfig& config,
                                            const datagen::Dataset& train_split,
                                            const datagen::Dataset& val_split,
                                            const TrainConfig& tc) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!train_split.stats) throw ConfigError("training split carries no normalization stats");
  if (tc.batch_size == 0) throw ConfigError("batch size must be positive");
  const datagen::NormalizationStats stats = *train_split.stats;

  operators::TimeWindows windows;
  windows.input_end = train_split.config.input_end;
  windows.target_start = train_split.config.target_start;
  windows.target_end = train_split.config.target_end;

  OperatorModel model = operators::make_model(kind, config, stats, tc.seed, windows);
  numcore::AdamState adam = numcore::AdamState::create(model.params, tc.adam);

  const PreparedSplit train_data = prepare(train_split, stats);
  const PreparedSplit val_data = prepare(val_split, stats);
  const std::size_t n = train_data.norm_inputs.size();
  const std::size_t epochs = tc.epochs == 0 ? default_epochs(kind) : tc.epochs;

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  numcore::ParamSet best_params = model.params;

  Pcg64 shuffle_rng(tc.seed, label_stream("epoch-shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    // Fisher-Yates reshuffle, one fresh permutation per epoch.
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t end = std::min(n, start + tc.batch_size);
      const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
      numcore::Tape tape;
      const auto bound = operators::bind_params(tape, model.params, /*requires_grad=*/true);
      const Tensor inputs = operators::batch_inputs_for(model, train_data.norm_inputs, indices,
                                                        train_data.input_t0, train_data.input_dt,
                                                        train_data.query_times);
      const numcore::Var pred = operators::model_forward(tape, model, bound, inputs,
                                                         train_data.query_times);
      const numcore::Var loss =
          tape.h1_loss(pred, gather_targets(train_data.targets, indices), train_data.dt);
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(start / tc.batch_size));
      }
      epoch_loss += loss_value * static_cast<double>(end - start);

      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, var] : bound) grads.emplace(name, tape.grad(var));
      numcore::adam_step(adam, model.params, grads);
    }
    epoch_loss /= static_cast<double>(n);
    const double val_loss = split_loss(model, val_data, tc.batch_size);
    report.train_loss.push_back(epoch_loss);
    report.val_loss.push_back(val_loss);
    if (val_loss < report.best_val_loss) {
      report.best_val_loss = val_loss;
      report.best_epoch = epoch;
      best_params = model.params;
    }
    if (tc.verbose) {
      std::fprintf(stderr, "epoch %zu/%zu train %.6f val %.6f\n", epoch, epochs, epoch_loss,
                   val_loss);
    }
  }

  model.params = std::move(best_params);
  model.metadata["best_epoch"] = static_cast<double>(report.best_epoch);
  model.metadata["best_val_loss"] = report.best_val_loss;
  model.metadata["epochs"] = static_cast<double>(epochs);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(model), std::move(report)};
}

void save_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "# loss=relative_h1_channel_mean\n";
  out << "epoch,train_loss,val_loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out << (e + 1) << ',' << report.train_loss[e] << ',' << report.val_loss[e] << '\n';
  }
  out << "# best_epoch=" << report.best_epoch << " best_val_loss=" << report.best_val_loss
      << '\n';
  out << "# wall_seconds=" << report.wall_seconds << '\n';
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace psno::training
