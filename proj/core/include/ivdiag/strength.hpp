#pragma once

#include <optional>

#include "ivdiag/iv.hpp"

namespace ivdiag {

// First-stage strength summary.  f_classic / f_robust / f_cluster are Wald
// statistics on the instrument coefficients under the named covariance
// flavors; f_boot replaces the covariance with the spread of the coefficients
// across nonparametric resamples; f_effective rescales by the instrument
// second-moment matrix and reduces to f_robust (or f_cluster) when there is a
// single instrument.
struct StrengthReport {
  int p_z = 0;
  double f_classic = 0.0;
  double f_robust = 0.0;
  std::optional<double> f_cluster;
  double f_effective = 0.0;
  double f_boot = 0.0;
  double f_boot_tau = 0.0;  // same replicates, Wald on the treatment coefficient
  bool boot_degenerate = false;
  int boot_reps = 0;
  int boot_kept = 0;
  int boot_dropped = 0;
  double rho_d_dhat = 0.0;  // signed correlation of treatment and first-stage fit
  double partial_r2 = 0.0;
  bool passes_rule_of_thumb = false;  // f_effective > 10
};

// coef' vcov^{-1} coef / k for a fitted instrument block.
double partial_f(const FitResult& first_stage);

// pi' Q pi / tr(vcov Q) with Q = Z'Z / n on the residualized instruments.
double effective_f(const FitResult& first_stage, const Eigen::MatrixXd& Z_res);

double rho_d_dhat(const Eigen::VectorXd& d_res, const Eigen::VectorXd& d_hat);

struct BootstrapFResult {
  double f_pi = 0.0;
  double f_tau = 0.0;
  int kept = 0;
  int dropped = 0;
  bool degenerate = false;  // replicate spread numerically zero
};

// Refits the whole first stage (partialling out included) on each resample.
BootstrapFResult bootstrap_f(const IVModel& model, const FitOptions& opts);

// Assembles the full report.  opts.flavor selects the covariance used for the
// effective statistic when the design is clustered; boot_reps/seed drive the
// bootstrap component.
StrengthReport strength_report(const IVModel& model, const FitOptions& opts);

}  // namespace ivdiag
