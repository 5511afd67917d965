#pragma once

// Summary table and SVG figures. The SVG is hand-written minimal markup:
// axes, points, lines and text, with data-* attributes carrying the plotted
// values so the figures can be checked against the stats files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wmq/allocation.hpp"
#include "wmq/stats.hpp"

namespace wmq {

inline std::string fixed(double v, int decimals) {
  if (v == 0) v = 0;  // no "-0.000"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

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

class Svg {
 public:
  Svg(int width, int height) : w_(width), h_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, const std::string& extra = "") {
    os_ << "<line x1=\"" << fixed(x1, 1) << "\" y1=\"" << fixed(y1, 1) << "\" x2=\"" << fixed(x2, 1) << "\" y2=\""
        << fixed(y2, 1) << "\" stroke=\"" << stroke << "\"" << extra << "/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill, const std::string& extra = "") {
    os_ << "<circle cx=\"" << fixed(cx, 1) << "\" cy=\"" << fixed(cy, 1) << "\" r=\"" << fixed(r, 1) << "\" fill=\""
        << fill << "\"" << extra << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    os_ << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y, 1) << "\" width=\"" << fixed(w, 1) << "\" height=\""
        << fixed(h, 1) << "\" fill=\"" << fill << "\"" << extra << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os_ << (i ? " " : "") << fixed(pts[i].first, 1) << ',' << fixed(pts[i].second, 1);
    os_ << "\"/>\n";
  }
  /// Five-point star centred at (cx, cy).
  void star(double cx, double cy, double r, const std::string& extra = "") {
    os_ << "<polygon class=\"star\"" << extra << " fill=\"#d4a017\" stroke=\"black\" points=\"";
    for (int i = 0; i < 10; ++i) {
      const double rad = i % 2 ? r * 0.45 : r;
      const double a = -std::numbers::pi / 2 + i * std::numbers::pi / 5;
      os_ << (i ? " " : "") << fixed(cx + rad * std::cos(a), 1) << ',' << fixed(cy + rad * std::sin(a), 1);
    }
    os_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 11) {
    os_ << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y, 1) << "\" font-size=\"" << size
        << "\" text-anchor=\"" << anchor << "\">" << xml_escape(s) << "</text>\n";
  }
  void raw(const std::string& s) { os_ << s; }

  [[nodiscard]] std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
        << w_ << ' ' << h_ << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << os_.str() << "</svg>\n";
    return out.str();
  }

 private:
  int w_, h_;
  std::ostringstream os_;
};

/// Linear map from a data interval onto a pixel interval.
struct Axis {
  double lo, hi, p0, p1;
  [[nodiscard]] double operator()(double v) const {
    if (hi == lo) return (p0 + p1) / 2;
    return p0 + (v - lo) / (hi - lo) * (p1 - p0);
  }
};

inline void draw_axes(Svg& svg, const Axis& x, const Axis& y, const std::string& xlabel, const std::string& ylabel,
                      int ticks = 4, int xdec = 1, int ydec = 2) {
  svg.line(x.p0, y.p0, x.p1, y.p0, "black");
  svg.line(x.p0, y.p0, x.p0, y.p1, "black");
  for (int i = 0; i <= ticks; ++i) {
    const double xv = x.lo + (x.hi - x.lo) * i / ticks;
    const double yv = y.lo + (y.hi - y.lo) * i / ticks;
    svg.line(x(xv), y.p0, x(xv), y.p0 + 4, "black");
    svg.text(x(xv), y.p0 + 16, fixed(xv, xdec), "middle", 10);
    svg.line(x.p0 - 4, y(yv), x.p0, y(yv), "black");
    svg.text(x.p0 - 6, y(yv) + 3, fixed(yv, ydec), "end", 10);
  }
  svg.text((x.p0 + x.p1) / 2, y.p0 + 32, xlabel, "middle");
  svg.raw("<text x=\"14\" y=\"" + fixed((y.p0 + y.p1) / 2, 1) + "\" font-size=\"11\" text-anchor=\"middle\" " +
          "transform=\"rotate(-90 14 " + fixed((y.p0 + y.p1) / 2, 1) + ")\">" + xml_escape(ylabel) + "</text>\n");
}

inline const char* series_color(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return colors[i % 6];
}

// ---------------------------------------------------------------------------
// figures

/// One panel per budget: success vs size (MB), non-dominated points starred.
inline std::string frontier_svg(const std::vector<std::pair<std::string, std::vector<ParetoPoint>>>& by_budget) {
  const int panel_w = 380;
  Svg svg(panel_w * static_cast<int>(std::max<std::size_t>(1, by_budget.size())), 320);
  double max_mb = 0;
  for (const auto& [b, pts] : by_budget)
    for (const auto& p : pts) max_mb = std::max(max_mb, bytes_to_mb(p.size_bytes));
  if (max_mb == 0) max_mb = 1;
  for (std::size_t k = 0; k < by_budget.size(); ++k) {
    const auto& [budget, pts] = by_budget[k];
    const double off = static_cast<double>(k) * panel_w;
    const Axis x{0, max_mb * 1.05, off + 50, off + panel_w - 20};
    const Axis y{0, 1, 270, 30};
    draw_axes(svg, x, y, "size (MB)", "success", 4, 3, 2);
    svg.text((x.p0 + x.p1) / 2, 20, "budget " + budget, "middle", 12);
    for (const auto& p : pts) {
      const double px = x(bytes_to_mb(p.size_bytes));
      const double py = y(p.success);
      const std::string attrs = " data-variant=\"" + xml_escape(p.variant) + "\" data-budget=\"" + budget + "\"";
      if (p.non_dominated)
        svg.star(px, py, 7, attrs);
      else
        svg.circle(px, py, 3.5, "#555555", attrs);
      svg.text(px + 6, py - 6, p.variant, "start", 8);
    }
  }
  return svg.str();
}

/// Horizontal whiskers, one row per comparison. Whisker endpoints are written
/// to three decimals in data-ci-low / data-ci-high.
inline std::string forest_svg(const std::vector<PairedComparison>& comps) {
  const int row_h = 24;
  const int height = 70 + row_h * static_cast<int>(comps.size());
  Svg svg(720, height);
  const Axis x{-1, 1, 300, 690};
  const double top = 30;
  const double bottom = top + row_h * static_cast<double>(comps.size());
  svg.line(x(0), top - 6, x(0), bottom, "#999999", " stroke-dasharray=\"4 3\"");
  svg.line(x.p0, bottom, x.p1, bottom, "black");
  for (int i = 0; i <= 4; ++i) {
    const double v = -1 + 0.5 * i;
    svg.line(x(v), bottom, x(v), bottom + 4, "black");
    svg.text(x(v), bottom + 16, fixed(v, 1), "middle", 10);
  }
  svg.text((x.p0 + x.p1) / 2, bottom + 32, "paired success delta (a - b), 95% bootstrap CI", "middle");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto& c = comps[i];
    const double cy = top + row_h * (static_cast<double>(i) + 0.5);
    svg.text(290, cy + 4, c.budget + ": " + c.name_a + " - " + c.name_b, "end", 10);
    svg.line(x(c.ci_low), cy, x(c.ci_high), cy, "black",
             " class=\"whisker\" data-comparison=\"" + xml_escape(c.budget + ":" + c.name_a + "-" + c.name_b) +
                 "\" data-ci-low=\"" + fixed(c.ci_low, 3) + "\" data-ci-high=\"" + fixed(c.ci_high, 3) + "\"");
    svg.line(x(c.ci_low), cy - 4, x(c.ci_low), cy + 4, "black");
    svg.line(x(c.ci_high), cy - 4, x(c.ci_high), cy + 4, "black");
    svg.circle(x(c.delta), cy, 4, "#1f77b4", " data-delta=\"" + fixed(c.delta, 3) + "\"");
  }
  return svg.str();
}

/// Success vs retained encoder percentage, one line per budget.
inline std::string retention_curve_svg(
    const std::vector<std::pair<std::string, std::vector<std::pair<int, double>>>>& curves) {
  Svg svg(480, 320);
  const Axis x{0, 100, 60, 440};
  const Axis y{0, 1, 270, 30};
  draw_axes(svg, x, y, "encoder layers kept at baseline (%)", "success", 4, 0, 2);
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& [budget, pts] = curves[k];
    std::vector<std::pair<double, double>> poly;
    for (const auto& [pct, s] : pts) {
      poly.emplace_back(x(pct), y(s));
      svg.circle(x(pct), y(s), 3.5, series_color(k),
                 " data-budget=\"" + budget + "\" data-retained=\"" + std::to_string(pct) + "\" data-success=\"" +
                     fixed(s, 3) + "\"");
    }
    if (poly.size() > 1) svg.polyline(poly, series_color(k));
    svg.text(x.p1 - 60, 40 + 14 * static_cast<double>(k), "budget " + budget, "start", 10);
    svg.rect(x.p1 - 72, 32 + 14 * static_cast<double>(k), 8, 8, series_color(k));
  }
  return svg.str();
}

struct DifficultyPanel {
  std::string budget;
  std::vector<std::pair<std::string, std::vector<DifficultyBin>>> series;  // variant -> bins
};

/// Grouped bars of success per difficulty bin.
inline std::string difficulty_svg(const std::vector<DifficultyPanel>& panels) {
  const int panel_w = 360;
  Svg svg(panel_w * static_cast<int>(std::max<std::size_t>(1, panels.size())), 320);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    const double off = static_cast<double>(k) * panel_w;
    const Axis y{0, 1, 260, 30};
    const double x0 = off + 50;
    const double x1 = off + panel_w - 20;
    svg.line(x0, y.p0, x1, y.p0, "black");
    svg.line(x0, y.p0, x0, y.p1, "black");
    for (int i = 0; i <= 4; ++i) svg.text(x0 - 6, y(0.25 * i) + 3, fixed(0.25 * i, 2), "end", 10);
    svg.text((x0 + x1) / 2, 20, "budget " + p.budget, "middle", 12);
    if (p.series.empty()) continue;
    const std::size_t n_bins = p.series.front().second.size();
    const double group_w = (x1 - x0) / static_cast<double>(std::max<std::size_t>(1, n_bins));
    const double bar_w = group_w * 0.8 / static_cast<double>(p.series.size());
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double gx = x0 + group_w * static_cast<double>(b) + group_w * 0.1;
      svg.text(gx + group_w * 0.4, y.p0 + 16, p.series.front().second[b].label, "middle", 10);
      for (std::size_t s = 0; s < p.series.size(); ++s) {
        const auto& bin = p.series[s].second[b];
        const double top = y(bin.mean_success);
        svg.rect(gx + bar_w * static_cast<double>(s), top, bar_w, y.p0 - top, series_color(s),
                 " data-variant=\"" + xml_escape(p.series[s].first) + "\" data-bin=\"" + bin.label +
                     "\" data-success=\"" + fixed(bin.mean_success, 3) + "\"");
      }
    }
    for (std::size_t s = 0; s < p.series.size(); ++s) {
      svg.rect(x0 + 10, 36 + 14 * static_cast<double>(s), 8, 8, series_color(s));
      svg.text(x0 + 22, 44 + 14 * static_cast<double>(s), p.series[s].first, "start", 10);
    }
  }
  return svg.str();
}

/// Run-level success vs visual embedding divergence.
inline std::string divergence_scatter_svg(const std::vector<RunPoint>& pts, std::optional<double> rho) {
  Svg svg(480, 340);
  double max_div = 0;
  for (const auto& p : pts) max_div = std::max(max_div, p.visual_embedding_divergence);
  if (max_div == 0) max_div = 1;
  const Axis x{0, max_div * 1.05, 60, 450};
  const Axis y{0, 1, 280, 40};
  draw_axes(svg, x, y, "visual embedding divergence (run mean)", "success (run mean)", 4, 2, 2);
  svg.text(255, 22, rho ? "Spearman rho = " + fixed(*rho, 3) : std::string("Spearman rho undefined"), "middle", 12);
  for (const auto& p : pts)
    svg.circle(x(p.visual_embedding_divergence), y(p.success), 3, p.budget == "bA" ? "#1f77b4" : "#d62728",
               " fill-opacity=\"0.7\" data-variant=\"" + xml_escape(p.variant) + "\" data-budget=\"" + p.budget +
                   "\" data-seed=\"" + std::to_string(p.seed) + "\"");
  return svg.str();
}

}  // namespace wmq
