#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ivdiag/iv.hpp"
#include "ivdiag/tf_table.hpp"

namespace ivdiag {

enum class IntervalKind { bounded, unbounded_left, unbounded_right, whole_line, empty, disconnected };

std::string to_string(IntervalKind kind);

// A finite union of closed intervals on the real line, sorted and disjoint,
// with infinite endpoints written out explicitly.
struct IntervalSet {
  std::vector<std::pair<double, double>> intervals;
  IntervalKind kind = IntervalKind::empty;

  bool contains(double x) const;
  double total_width() const;  // +inf when any piece is unbounded

  static IntervalSet from_intervals(std::vector<std::pair<double, double>> pieces);
  static IntervalSet bounded(double lo, double hi);
  static IntervalSet half_line_below(double hi);
  static IntervalSet half_line_above(double lo);
  static IntervalSet whole_line();
  static IntervalSet none();
};

// One inference method's answer for the treatment coefficient.
struct InferenceResult {
  std::string method;  // analytic | bootstrap_c | bootstrap_t | ar | tf
  double point = 0.0;
  IntervalSet ci;
  double p_null = 1.0;  // H0: treatment coefficient = 0
  double alpha = 0.05;
  std::map<std::string, double> meta;
  std::vector<std::string> notes;
};

InferenceResult analytic_inference(const IVModel& model, const FitOptions& opts);

// Resamples rows (or whole clusters), refits the full two-stage pipeline per
// replicate, and returns the percentile interval (bootstrap_c) plus the
// studentized interval (bootstrap_t).  The studentized statistic is centered:
// t* = (tau* - tau_full) / se*, and its percentiles are plugged into
// tau_full + t* se_full.  p values invert the interval in alpha with
// resolution 1/B.
struct BootstrapInference {
  InferenceResult percentile;
  InferenceResult studentized;
};

BootstrapInference bootstrap_infer(const IVModel& model, const FitOptions& opts);

struct ARTest {
  double statistic = 0.0;  // gamma' V^{-1} gamma at the hypothesized value
  double p = 1.0;          // chi-square reference with p_z degrees of freedom
};

ARTest ar_test(const IVModel& model, double tau0, const FitOptions& opts);

struct ARSetOptions {
  double alpha = 0.05;
  bool force_grid = false;   // use the grid even in the just-identified case
  int grid_points = 20001;
  double span_se = 50.0;     // initial half width in analytic-se units
  int max_expansions = 16;
};

// Inverts the test over the real line.  With one instrument the acceptance
// region is a quadratic inequality solved in closed form; otherwise the
// statistic is scanned on an expanding grid and the tails are classified by
// the limit of the statistic, which is the first-stage Wald statistic.
InferenceResult ar_confidence_set(const IVModel& model, const FitOptions& opts,
                                  const ARSetOptions& set_opts = {});

// Adjusted t-ratio procedure: replaces the +/- 1.96 band with the tabulated
// critical value keyed on the first-stage F.  Below the table floor the
// interval is the whole line.
InferenceResult tf_adjust(double tau_hat, double se, double f_first, double alpha);

}  // namespace ivdiag
