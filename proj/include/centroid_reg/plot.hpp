#pragma once

// Static SVG line chart of test accuracy per epoch, one curve per history.
// Every plotted point is also emitted as a <circle> carrying the exact epoch
// and accuracy in data-epoch / data-accuracy attributes (17 significant
// digits), so the chart can be checked against its CSV source.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "centroid_reg/errors.hpp"
#include "centroid_reg/trainer.hpp"

namespace centroid_reg {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<std::size_t, double>> points;  // (epoch, accuracy)
};

/// Evaluated epochs only.
inline PlotSeries series_from_history(const MetricHistory& h, std::string label) {
  PlotSeries s{std::move(label), {}};
  for (const auto& e : h.epochs) {
    if (e.test_accuracy) s.points.emplace_back(e.epoch, *e.test_accuracy);
  }
  return s;
}

namespace detail {
inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}
}  // namespace detail

inline std::string accuracy_svg(const std::vector<PlotSeries>& series,
                                const std::string& title = "Test accuracy per epoch") {
  if (series.empty()) throw ValidationError("plot: no series");
  std::size_t max_epoch = 1;
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [epoch, acc] : s.points) {
      max_epoch = std::max(max_epoch, epoch);
      lo = std::min(lo, acc);
      hi = std::max(hi, acc);
      any = true;
    }
  }
  if (!any) throw ValidationError("plot: histories contain no evaluated epochs");
  lo = std::max(0.0, std::floor(lo * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil(hi * 20.0) / 20.0);
  if (hi <= lo) {
    lo = std::max(0.0, lo - 0.05);
    hi = std::min(1.0, lo + 0.1);
  }

  constexpr double width = 720, height = 440;
  constexpr double left = 70, right = 170, top = 40, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double min_epoch = 1.0;
  const double epoch_span = std::max(1.0, static_cast<double>(max_epoch) - min_epoch);
  auto px = [&](double epoch) { return left + (epoch - min_epoch) / epoch_span * plot_w; };
  auto py = [&](double acc) { return top + (hi - acc) / (hi - lo) * plot_h; };

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << detail::fixed(left + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::xml_escape(title) << "</text>\n";

  // Axes, grid and ticks.
  svg << "  <g stroke=\"#444\" stroke-width=\"1\">\n";
  svg << "    <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\"/>\n";
  svg << "    <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n";
  svg << "  </g>\n";
  svg << "  <g fill=\"#222\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double acc = lo + (hi - lo) * i / 5.0;
    const double y = py(acc);
    svg << "    <line x1=\"" << left << "\" y1=\"" << detail::fixed(y) << "\" x2=\"" << left + plot_w << "\" y2=\""
        << detail::fixed(y) << "\" stroke=\"#ddd\"/>\n";
    svg << "    <text x=\"" << left - 8 << "\" y=\"" << detail::fixed(y + 4) << "\" text-anchor=\"end\">"
        << detail::fixed(acc * 100.0, 1) << "</text>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, (max_epoch + 9) / 10);
  for (std::size_t e = 1; e <= max_epoch; e += step) {
    svg << "    <text x=\"" << detail::fixed(px(static_cast<double>(e))) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << e << "</text>\n";
  }
  svg << "    <text x=\"" << detail::fixed(left + plot_w / 2) << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\">epoch</text>\n";
  svg << "    <text transform=\"translate(18," << detail::fixed(top + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">test accuracy (%)</text>\n";
  svg << "  </g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    svg << "  <g class=\"series\" data-label=\"" << detail::xml_escape(s.label) << "\">\n";
    svg << "    <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) svg << ' ';
      svg << detail::fixed(px(static_cast<double>(s.points[i].first)), 3) << ','
          << detail::fixed(py(s.points[i].second), 3);
    }
    svg << "\"/>\n";
    for (const auto& [epoch, acc] : s.points) {
      svg << "    <circle cx=\"" << detail::fixed(px(static_cast<double>(epoch)), 3) << "\" cy=\""
          << detail::fixed(py(acc), 3) << "\" r=\"2\" fill=\"" << color << "\" data-epoch=\"" << epoch
          << "\" data-accuracy=\"" << format_double(acc) << "\"/>\n";
    }
    svg << "  </g>\n";
    const double ly = top + 14 + 20.0 * static_cast<double>(k);
    svg << "  <line x1=\"" << left + plot_w + 14 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 38
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "  <text x=\"" << left + plot_w + 44 << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace centroid_reg
