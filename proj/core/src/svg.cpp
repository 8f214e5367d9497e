#include "psno/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "psno/errors.hpp"

namespace psno::svg {

namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void fold(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo < hi)) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Round tick spacing to 1/2/5 times a power of ten.
double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(target_ticks, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2.0 * mag;
  if (r < 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

}  // namespace

void render(const std::vector<Plot>& panels, const std::string& path, double panel_width,
            double panel_height) {
  if (panels.empty()) throw ConfigError("svg: no panels");
  const double margin_l = 64, margin_r = 16, margin_t = 34, margin_b = 42;
  const double total_w = panel_width;
  const double total_h = panel_height * static_cast<double>(panels.size());

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << total_w << ' ' << total_h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Plot& plot = panels[p];
    const double oy = static_cast<double>(p) * panel_height;
    const double x0 = margin_l, x1 = panel_width - margin_r;
    const double y0 = oy + margin_t, y1 = oy + panel_height - margin_b;

    Range xr, yr;
    for (const Series& s : plot.series) {
      for (double v : s.x) xr.fold(v);
      for (double v : s.y) yr.fold(plot.log_y ? (v > 0 ? std::log10(v) : NAN) : v);
    }
    for (const VerticalMarker& m : plot.markers) xr.fold(m.x);
    xr.pad();
    yr.pad();

    auto sx = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
    auto sy = [&](double v) {
      const double t = plot.log_y ? (v > 0 ? std::log10(v) : NAN) : v;
      return y1 - (t - yr.lo) / (yr.hi - yr.lo) * (y1 - y0);
    };

    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << oy + 18
        << "\" text-anchor=\"middle\" font-size=\"13\">" << plot.title << "</text>\n";
    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << x1 - x0 << "\" height=\""
        << y1 - y0 << "\" fill=\"none\" stroke=\"#222\"/>\n";

    const double xstep = nice_step(xr.hi - xr.lo, 7);
    for (double v = std::ceil(xr.lo / xstep) * xstep; v <= xr.hi + 1e-12; v += xstep) {
      out << "<line x1=\"" << sx(v) << "\" y1=\"" << y1 << "\" x2=\"" << sx(v) << "\" y2=\""
          << y1 + 4 << "\" stroke=\"#222\"/>\n";
      out << "<text x=\"" << sx(v) << "\" y=\"" << y1 + 16 << "\" text-anchor=\"middle\">"
          << fmt(v) << "</text>\n";
    }
    const double ystep = nice_step(yr.hi - yr.lo, 5);
    for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-12; v += ystep) {
      const double yy = y1 - (v - yr.lo) / (yr.hi - yr.lo) * (y1 - y0);
      out << "<line x1=\"" << x0 - 4 << "\" y1=\"" << yy << "\" x2=\"" << x0 << "\" y2=\"" << yy
          << "\" stroke=\"#222\"/>\n";
      out << "<text x=\"" << x0 - 7 << "\" y=\"" << yy + 3 << "\" text-anchor=\"end\">"
          << (plot.log_y ? "1e" + fmt(v) : fmt(v)) << "</text>\n";
    }
    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y1 + 32
        << "\" text-anchor=\"middle\">" << plot.x_label << "</text>\n";
    out << "<text x=\"" << x0 - 48 << "\" y=\"" << (y0 + y1) / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << x0 - 48 << ' ' << (y0 + y1) / 2
        << ")\">" << plot.y_label << "</text>\n";

    for (const VerticalMarker& m : plot.markers) {
      out << "<line x1=\"" << sx(m.x) << "\" y1=\"" << y0 << "\" x2=\"" << sx(m.x) << "\" y2=\""
          << y1 << "\" stroke=\"" << m.color << "\" stroke-dasharray=\"4 3\"/>\n";
      if (!m.label.empty()) {
        out << "<text x=\"" << sx(m.x) + 3 << "\" y=\"" << y0 + 12 << "\" fill=\"" << m.color
            << "\">" << m.label << "</text>\n";
      }
    }

    double legend_y = y0 + 14;
    for (const Series& s : plot.series) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width
          << '"';
      if (s.dashed) out << " stroke-dasharray=\"5 4\"";
      out << " points=\"";
      bool pen_down = false;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double yy = sy(s.y[i]);
        if (!std::isfinite(yy)) {
          if (pen_down) {
            out << "\"/>\n<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\""
                << s.width << '"';
            if (s.dashed) out << " stroke-dasharray=\"5 4\"";
            out << " points=\"";
            pen_down = false;
          }
          continue;
        }
        out << sx(s.x[i]) << ',' << yy << ' ';
        pen_down = true;
      }
      out << "\"/>\n";
      if (!s.label.empty()) {
        out << "<line x1=\"" << x1 - 130 << "\" y1=\"" << legend_y << "\" x2=\"" << x1 - 106
            << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color << "\" stroke-width=\""
            << s.width << '"' << (s.dashed ? " stroke-dasharray=\"5 4\"" : "") << "/>\n";
        out << "<text x=\"" << x1 - 100 << "\" y=\"" << legend_y + 3 << "\">" << s.label
            << "</text>\n";
        legend_y += 14;
      }
    }
  }
  out << "</svg>\n";
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace psno::svg
