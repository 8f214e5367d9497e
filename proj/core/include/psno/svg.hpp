#pragma once

#include <string>
#include <vector>

namespace psno::svg {

struct Series {
  std::vector<double> x;
  std::vector<double> y;  // NaN entries break the polyline
  std::string color = "#000000";
  double width = 1.5;
  bool dashed = false;
  std::string label;
};

struct VerticalMarker {
  double x = 0.0;
  std::string color = "#888888";
  std::string label;
};

struct Plot {
  std::string title;
  std::string x_label, y_label;
  std::vector<Series> series;
  std::vector<VerticalMarker> markers;
  bool log_y = false;
};

// Renders stacked panels (one per Plot) into a standalone SVG file with
// axes, tick labels and a small legend. Pure text emission; deterministic.
void render(const std::vector<Plot>& panels, const std::string& path, double panel_width = 760,
            double panel_height = 300);

}  // namespace psno::svg
