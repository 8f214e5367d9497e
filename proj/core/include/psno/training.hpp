#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psno/datagen.hpp"
#include "psno/operators.hpp"

namespace psno::training {

struct TrainConfig {
  std::size_t epochs = 0;  // 0: per-kind default (60 FNO/LNODE, 600 DeepONet)
  std::size_t batch_size = 64;
  numcore::AdamOptions adam{};
  std::uint64_t seed = 0;
  bool verbose = false;
};

std::size_t default_epochs(operators::ModelKind kind);

struct TrainReport {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based epoch with minimal validation loss
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
};

// Relative discrete H1 error, mean over channels: per channel
// sqrt(||u-p||^2 + ||u'-p'||^2) / sqrt(||u||^2 + ||u'||^2 + eps) with
// ||v||^2 = dt * sum v_j^2 and finite-difference derivatives. pred/target
// are (n, 2) tensors.
double h1_loss(const Tensor& pred, const Tensor& target, double dt);

// Mini-batch Adam on the H1 loss over the coarse target grid; validation
// after each epoch; returns the model snapshot from the best epoch.
// Deterministic given the seed.
std::pair<operators::OperatorModel, TrainReport> train(
    operators::ModelKind kind, const operators::ModelConfig& config,
    const datagen::Dataset& train_split, const datagen::Dataset& val_split,
    const TrainConfig& tc);

// CSV: "epoch,train_loss,val_loss" rows; wall seconds in a trailing comment.
void save_report_csv(const TrainReport& report, const std::string& path);

}  // namespace psno::training
