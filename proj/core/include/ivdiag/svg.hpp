#pragma once

#include <string>
#include <vector>

#include "ivdiag/report.hpp"

namespace ivdiag {

// Horizontal coefficient plot: one row per estimator/method, a point marker
// plus the interval pieces as segments.  Pieces that run to +/- infinity are
// clipped at the plot margins and capped with arrowheads.
std::string render_coefficient_plot(const std::vector<PlotRow>& rows, const std::string& title);

// The plotted numbers as CSV (label, group, kind, piece, point, lo, hi) with
// full round-trip precision.
std::string plot_rows_csv(const std::vector<PlotRow>& rows);

}  // namespace ivdiag
