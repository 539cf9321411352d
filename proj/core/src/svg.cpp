#include "ivdiag/svg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ivdiag/csv.hpp"
#include "ivdiag/math.hpp"

namespace ivdiag {

namespace {

// Layout constants.  Changing them changes only geometry, never the numbers
// carried in the data-* attributes or the companion CSV.
constexpr double kLabelWidth = 190.0;   // left gutter for row labels
constexpr double kPlotWidth = 500.0;    // drawable x span
constexpr double kRightPad = 40.0;
constexpr double kTopPad = 46.0;
constexpr double kRowHeight = 28.0;
constexpr double kGroupGap = 14.0;      // extra space between estimator groups
constexpr double kBottomPad = 46.0;
constexpr double kMarkerRadius = 3.5;
constexpr double kArrowLength = 9.0;

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string num17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  }
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Scale {
  double lo = -1.0, hi = 1.0;
  double to_px(double v) const {
    return kLabelWidth + (v - lo) / (hi - lo) * kPlotWidth;
  }
};

// The window is anchored on the point estimates; a finite endpoint joins it
// only when it sits within a generous corridor around them (50 typical
// interval widths).  Tiny-sample resampling can put one endpoint many orders
// of magnitude out, and letting it into the scale would flatten every other
// row to a pixel; such endpoints are left to edge clipping instead.
Scale make_scale(const std::vector<PlotRow>& rows) {
  const double inf = std::numeric_limits<double>::infinity();
  double p_lo = inf, p_hi = -inf;
  std::vector<double> widths;
  for (const auto& row : rows) {
    if (std::isfinite(row.point)) {
      p_lo = std::min(p_lo, row.point);
      p_hi = std::max(p_hi, row.point);
    }
    for (const auto& [a, b] : row.intervals) {
      if (std::isfinite(a) && std::isfinite(b)) widths.push_back(b - a);
    }
  }

  double lo = inf, hi = -inf;
  const auto grow = [&](double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  if (p_lo <= p_hi) {
    double base = std::max(p_hi - p_lo, widths.empty() ? 0.0 : stats::median(widths));
    if (!(base > 0.0)) base = 1.0;
    const double w_lo = p_lo - 50.0 * base;
    const double w_hi = p_hi + 50.0 * base;
    grow(p_lo);
    grow(p_hi);
    for (const auto& row : rows) {
      for (const auto& [a, b] : row.intervals) {
        if (a >= w_lo && a <= w_hi) grow(a);
        if (b >= w_lo && b <= w_hi) grow(b);
      }
    }
  } else {
    // No finite point anywhere: fall back to the hull of finite endpoints.
    for (const auto& row : rows) {
      for (const auto& [a, b] : row.intervals) {
        grow(a);
        grow(b);
      }
    }
  }
  Scale s;
  if (!(lo <= hi)) return s;
  if (lo == hi) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.08 * (hi - lo);
  s.lo = lo - pad;
  s.hi = hi + pad;
  return s;
}

}  // namespace

std::string render_coefficient_plot(const std::vector<PlotRow>& rows, const std::string& title) {
  // Stable row order: ols group first, then tsls, original order within each.
  std::vector<const PlotRow*> ordered;
  for (const auto& r : rows) {
    if (r.group == "ols") ordered.push_back(&r);
  }
  const std::size_t n_ols = ordered.size();
  for (const auto& r : rows) {
    if (r.group != "ols") ordered.push_back(&r);
  }

  const Scale scale = make_scale(rows);
  const double height = kTopPad + kRowHeight * static_cast<double>(ordered.size()) +
                        (n_ols > 0 && n_ols < ordered.size() ? kGroupGap : 0.0) + kBottomPad;
  const double width = kLabelWidth + kPlotWidth + kRightPad;
  const double x_left = kLabelWidth;
  const double x_right = kLabelWidth + kPlotWidth;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, "%.0f")
      << "\" height=\"" << fmt(height, "%.0f") << "\" viewBox=\"0 0 " << fmt(width, "%.0f")
      << " " << fmt(height, "%.0f") << "\">\n";
  svg << "<style>\n"
         "/* layout: label gutter " << fmt(kLabelWidth, "%.0f") << "px, plot "
      << fmt(kPlotWidth, "%.0f") << "px, row " << fmt(kRowHeight, "%.0f")
      << "px, group gap " << fmt(kGroupGap, "%.0f") << "px */\n"
         "text { font: 12px sans-serif; fill: #222; }\n"
         ".title { font: bold 14px sans-serif; }\n"
         ".axis { stroke: #999; stroke-width: 1; }\n"
         ".zero { stroke: #bbb; stroke-width: 1; stroke-dasharray: 4 3; }\n"
         ".ci { stroke-width: 2; }\n"
         ".ci.ols { stroke: #7a5195; }\n"
         ".ci.tsls { stroke: #2166ac; }\n"
         ".pt.ols { fill: #7a5195; }\n"
         ".pt.tsls { fill: #2166ac; }\n"
         ".arrow.ols { fill: #7a5195; }\n"
         ".arrow.tsls { fill: #2166ac; }\n"
         ".empty-mark { font: 11px sans-serif; fill: #b2182b; }\n"
         "</style>\n";
  svg << "<text class=\"title\" x=\"" << fmt(kLabelWidth) << "\" y=\"22\">"
      << xml_escape(title) << "</text>\n";

  // Frame and zero reference.
  svg << "<line class=\"axis\" x1=\"" << fmt(x_left) << "\" y1=\"" << fmt(height - kBottomPad + 6)
      << "\" x2=\"" << fmt(x_right) << "\" y2=\"" << fmt(height - kBottomPad + 6) << "\"/>\n";
  for (const double tick : {scale.lo, 0.5 * (scale.lo + scale.hi), scale.hi}) {
    const double x = scale.to_px(tick);
    svg << "<line class=\"axis\" x1=\"" << fmt(x) << "\" y1=\"" << fmt(height - kBottomPad + 6)
        << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(height - kBottomPad + 11) << "\"/>\n";
    svg << "<text x=\"" << fmt(x - 14) << "\" y=\"" << fmt(height - kBottomPad + 24) << "\">"
        << fmt(tick, "%.3g") << "</text>\n";
  }
  if (scale.lo < 0.0 && scale.hi > 0.0) {
    const double x0 = scale.to_px(0.0);
    svg << "<line class=\"zero\" x1=\"" << fmt(x0) << "\" y1=\"" << fmt(kTopPad - 8)
        << "\" x2=\"" << fmt(x0) << "\" y2=\"" << fmt(height - kBottomPad + 6) << "\"/>\n";
  }

  double y = kTopPad;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i == n_ols && n_ols > 0) y += kGroupGap;
    const PlotRow& row = *ordered[i];
    const double cy = y + 0.5 * kRowHeight;
    const std::string cls = row.group == "ols" ? "ols" : "tsls";
    const std::string base_id = "ci-" + slug(row.group) + "-" + slug(row.label);
    const std::string display =
        (row.group == "ols" ? "ols \xC2\xB7 " : "2sls \xC2\xB7 ") + row.label;

    svg << "<g data-group=\"" << xml_escape(row.group) << "\" data-label=\""
        << xml_escape(row.label) << "\" data-kind=\"" << xml_escape(row.kind)
        << "\" data-point=\"" << num17(row.point) << "\">\n";
    svg << "<text x=\"12\" y=\"" << fmt(cy + 4) << "\">" << xml_escape(display) << "</text>\n";

    if (row.intervals.empty()) {
      svg << "<text class=\"empty-mark\" x=\"" << fmt(0.5 * (x_left + x_right) - 30)
          << "\" y=\"" << fmt(cy + 4) << "\">empty set</text>\n";
    }
    int piece = 0;
    for (const auto& [lo, hi] : row.intervals) {
      // An endpoint is drawn as an off-plot arrow both when it is infinite
      // and when it is finite but outside the chosen window.
      const bool lo_inf = std::isinf(lo) || lo < scale.lo;
      const bool hi_inf = std::isinf(hi) || hi > scale.hi;
      const double px_lo = lo_inf ? x_left : std::clamp(scale.to_px(lo), x_left, x_right);
      const double px_hi = hi_inf ? x_right : std::clamp(scale.to_px(hi), x_left, x_right);
      svg << "<line class=\"ci " << cls << "\" id=\"" << base_id << "-" << piece
          << "\" data-lo=\"" << num17(lo) << "\" data-hi=\"" << num17(hi) << "\" x1=\""
          << fmt(px_lo) << "\" y1=\"" << fmt(cy) << "\" x2=\"" << fmt(px_hi) << "\" y2=\""
          << fmt(cy) << "\"/>\n";
      if (lo_inf) {
        svg << "<polygon class=\"arrow " << cls << "\" points=\""
            << fmt(x_left - kArrowLength) << "," << fmt(cy) << " " << fmt(x_left) << ","
            << fmt(cy - 4) << " " << fmt(x_left) << "," << fmt(cy + 4) << "\"/>\n";
      }
      if (hi_inf) {
        svg << "<polygon class=\"arrow " << cls << "\" points=\""
            << fmt(x_right + kArrowLength) << "," << fmt(cy) << " " << fmt(x_right) << ","
            << fmt(cy - 4) << " " << fmt(x_right) << "," << fmt(cy + 4) << "\"/>\n";
      }
      ++piece;
    }
    if (std::isfinite(row.point)) {
      svg << "<circle class=\"pt " << cls << "\" cx=\"" << fmt(scale.to_px(row.point))
          << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(kMarkerRadius) << "\"/>\n";
    }
    svg << "</g>\n";
    y += kRowHeight;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string plot_rows_csv(const std::vector<PlotRow>& rows) {
  std::ostringstream out;
  out << "label,group,kind,piece,point,lo,hi\n";
  for (const auto& row : rows) {
    if (row.intervals.empty()) {
      out << csv_escape(row.label) << "," << csv_escape(row.group) << ","
          << csv_escape(row.kind) << ",0," << num17(row.point) << ",,\n";
      continue;
    }
    int piece = 0;
    for (const auto& [lo, hi] : row.intervals) {
      out << csv_escape(row.label) << "," << csv_escape(row.group) << ","
          << csv_escape(row.kind) << "," << piece << "," << num17(row.point) << ","
          << num17(lo) << "," << num17(hi) << "\n";
      ++piece;
    }
  }
  return out.str();
}

}  // namespace ivdiag
