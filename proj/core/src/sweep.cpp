#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "psno/errors.hpp"
#include "psno/evaluation.hpp"
#include "psno/svg.hpp"
#include "psno/time_grid.hpp"

namespace psno::evaluation {

namespace {

constexpr double kDegenerateDenominator = 1e-9;

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Mean MASE of a model family at one ground-truth trajectory; NaN when the
// target is (near) constant and the scaled error loses meaning.
double family_mase(const std::vector<operators::OperatorModel>& models,
                   const datagen::Trajectory& input, const datagen::Trajectory& target,
                   const std::vector<double>& query) {
  double total = 0.0;
  for (const auto& model : models) {
    const Tensor norm_target = datagen::normalize_trajectory(target, model.norm_stats);
    const Tensor pred = model.predict(input, query);
    const MaseParts parts = mase_parts(pred, norm_target);
    if (parts.denominator < kDegenerateDenominator) return nan_value();
    total += parts.numerator / parts.denominator;
  }
  return total / static_cast<double>(models.size());
}

}  // namespace

SweepReport regime_sweep(const std::vector<operators::OperatorModel>& mix0_models,
                         const std::vector<operators::OperatorModel>& mix20_models,
                         const SweepConfig& config) {
  if (mix0_models.empty() || mix20_models.empty()) {
    throw ConfigError("regime sweep needs checkpoints for both training mixes");
  }
  const datagen::SamplingConfig& base = config.base;
  smib::SmibParams params;
  params.E = base.E;
  params.V = base.V;
  params.X = base.X;
  params.H = base.H;
  params.f0 = base.f0;
  params.Pm = config.pm;
  params.D = config.d;
  params.validate();
  const double pmax = smib::max_power(params);

  SweepReport report;
  report.marker_no_disturbance = config.pm;
  smib::BisectionOptions bisect;
  bisect.horizon = base.target_end;
  report.marker_threshold = smib::instability_lower_bound(params, bisect);

  const std::size_t n_in = base.input_points();
  const std::size_t n_tgt = base.target_points();
  const std::vector<double> query = uniform_grid(base.target_start, base.dt, n_tgt);

  const double delta0 = smib::equilibrium_angle(params.Pm, pmax);
  for (std::size_t g = 0; g < config.grid_points; ++g) {
    const double pm1 =
        pmax * static_cast<double>(g) / static_cast<double>(config.grid_points - 1);
    smib::SmibParams p = params;
    p.Pm1 = pm1;
    const smib::DenseSolution sol =
        smib::solve(p, smib::MachineState{delta0, 0.0}, 0.0, base.target_end);
    const datagen::Trajectory input = sol.sample(0.0, base.dt, n_in);
    const datagen::Trajectory target = sol.sample(base.target_start, base.dt, n_tgt);

    report.pm1.push_back(pm1);
    report.mase_mix0.push_back(family_mase(mix0_models, input, target, query));
    report.mase_mix20.push_back(family_mase(mix20_models, input, target, query));
  }
  return report;
}

double mean_unstable_region(const SweepReport& report, const std::vector<double>& mase) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < report.pm1.size(); ++i) {
    if (report.pm1[i] <= report.marker_threshold) continue;
    if (!std::isfinite(mase[i])) continue;
    total += mase[i];
    ++count;
  }
  if (count == 0) throw ConfigError("no usable grid points above the stability threshold");
  return total / static_cast<double>(count);
}

void save_sweep_csv(const SweepReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "# marker_no_disturbance=" << report.marker_no_disturbance << '\n';
  out << "# marker_threshold=" << report.marker_threshold << '\n';
  out << "pm1,mase_mix0,mase_mix20,flags\n";
  for (std::size_t i = 0; i < report.pm1.size(); ++i) {
    const bool degenerate = !std::isfinite(report.mase_mix0[i]) ||
                            !std::isfinite(report.mase_mix20[i]);
    out << report.pm1[i] << ',';
    if (std::isfinite(report.mase_mix0[i])) out << report.mase_mix0[i];
    out << ',';
    if (std::isfinite(report.mase_mix20[i])) out << report.mase_mix20[i];
    out << ',' << (degenerate ? "degenerate" : "") << '\n';
  }
  if (!out) throw IoError("failed while writing " + path);
}

void render_sweep_svg(const SweepReport& report, const std::string& path) {
  svg::Plot plot;
  plot.title = "Regime generalization: MASE over the disturbance sweep";
  plot.x_label = "Pm1 (pu)";
  plot.y_label = "MASE";
  plot.log_y = true;
  svg::Series mix0{report.pm1, report.mase_mix0, "#1f77b4", 1.8, false, "0% unstable mix"};
  svg::Series mix20{report.pm1, report.mase_mix20, "#ff7f0e", 1.8, false, "20% unstable mix"};
  plot.series = {mix0, mix20};
  plot.markers.push_back({report.marker_no_disturbance, "#2ca02c", "Pm1 = Pm"});
  plot.markers.push_back({report.marker_threshold, "#d62728", "stability threshold"});
  svg::render({plot}, path);
}

void render_overlay_svg(const std::vector<OverlayPanel>& panels, const std::string& path) {
  std::vector<svg::Plot> plots;
  for (const OverlayPanel& panel : panels) {
    for (int ch = 0; ch < 2; ++ch) {
      svg::Plot plot;
      plot.title = panel.title + (ch == 0 ? " (rotor angle)" : " (speed deviation)");
      plot.x_label = "t (s)";
      plot.y_label = ch == 0 ? "delta (rad)" : "omega (rad/s)";
      auto series_of = [&](const datagen::Trajectory& traj, const std::string& color,
                           bool dashed, const std::string& label) {
        svg::Series s;
        for (std::size_t k = 0; k < traj.size(); ++k) {
          s.x.push_back(traj.time_at(k));
          s.y.push_back(ch == 0 ? traj.delta[k] : traj.omega[k]);
        }
        s.color = color;
        s.dashed = dashed;
        s.label = label;
        return s;
      };
      plot.series.push_back(series_of(panel.truth_full, "#444444", false, "true trajectory"));
      plot.series.push_back(series_of(panel.input, "#1f77b4", false, "input segment"));
      plot.series.push_back(series_of(panel.prediction, "#d62728", true, "prediction"));
      plots.push_back(std::move(plot));
    }
  }
  svg::render(plots, path);
}

}  // namespace psno::evaluation
