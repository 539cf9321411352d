#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ivdiag/dataset.hpp"
#include "ivdiag/errors.hpp"

namespace ivdiag {

enum class VCovFlavor { classic, hc1, cr1, bootstrap };

std::string to_string(VCovFlavor flavor);
VCovFlavor vcov_flavor_from_string(const std::string& s);

// Options shared by the OLS and 2SLS entry points.
//
// clusters: one code (0..G-1) per row; required for cr1 and for a clustered
//   bootstrap.  absorbed_rank: number of regressors partialled out beforehand,
//   counted in every degrees-of-freedom correction.  boot_reps/seed drive the
//   bootstrap flavor only.
struct FitOptions {
  VCovFlavor flavor = VCovFlavor::classic;
  const std::vector<int>* clusters = nullptr;
  int boot_reps = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  bool add_intercept = true;
  int absorbed_rank = 0;
  double alpha = 0.05;
  std::vector<std::string> term_names = {};
};

struct FitResult {
  std::vector<std::string> terms;
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd se;
  Eigen::VectorXd tstat;
  Eigen::VectorXd pvalue;    // normal reference, two sided
  Eigen::VectorXd ci_low;    // coef -/+ z_{1-alpha/2} * se
  Eigen::VectorXd ci_high;
  Eigen::Index n = 0;
  Eigen::Index df_residual = 0;
  double sigma2_hat = 0.0;   // residual sum of squares / df_residual
  double alpha = 0.05;
  VCovFlavor flavor = VCovFlavor::classic;
  Eigen::VectorXd residuals;
  Eigen::VectorXd fitted;
  int boot_kept = 0;         // bootstrap flavor bookkeeping
  int boot_dropped = 0;

  Eigen::Index k() const { return coef.size(); }
};

// Least squares with the requested covariance flavor.  X holds the slope
// columns only; an intercept is prepended unless opts.add_intercept is false.
// Rank deficiency raises CollinearityError naming the dependent columns.
FitResult ols_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const FitOptions& opts = {});

// Residuals of each target column after projecting on the controls (intercept
// appended unless add_intercept is false).  control_names, when given, makes
// collinearity messages name the offending columns.
Eigen::MatrixXd residualize_on(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& controls,
                               bool add_intercept = true,
                               const std::vector<std::string>* control_names = nullptr);

// Dataset-level partialling out: returns a copy of `data` in which every
// target column has been replaced by its residual on the control columns plus
// an intercept.  Non-target columns are untouched.
Dataset fwl_residualize(const Dataset& data, const std::vector<std::string>& targets,
                        const std::vector<std::string>& controls);

// Pieces of a completed least-squares fit needed to form a sandwich.
struct FitInternals {
  const Eigen::MatrixXd& X;        // design as actually used
  const Eigen::VectorXd& residuals;
  const Eigen::MatrixXd& bread;    // (X'X)^{-1}
  Eigen::Index k_total;            // columns of X plus absorbed regressors
};

// classic:  sigma2 * (X'X)^{-1} with sigma2 = RSS / (n - k)
// hc1:      n/(n-k) * (X'X)^{-1} [sum_i e_i^2 x_i x_i'] (X'X)^{-1}
// cr1:      G/(G-1) * (n-1)/(n-k) * (X'X)^{-1} [sum_g X_g' e_g e_g' X_g] (X'X)^{-1}
// The bootstrap flavor is implemented by the fitting routines, not here.
Eigen::MatrixXd sandwich_vcov(const FitInternals& fit, VCovFlavor flavor,
                              const std::vector<int>* clusters);

}  // namespace ivdiag
