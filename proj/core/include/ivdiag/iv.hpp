#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ivdiag/bootstrap.hpp"
#include "ivdiag/dataset.hpp"
#include "ivdiag/regression.hpp"

namespace ivdiag {

// Resolved design for one instrumental-variables study: a single endogenous
// treatment, one or more instruments, optional exogenous covariates, optional
// cluster assignment.  The intercept is treated as a covariate and absorbed
// together with them.
struct IVModel {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::MatrixXd Z;           // n x p_z
  Eigen::MatrixXd covariates;  // n x p_x, may have zero columns
  std::vector<int> clusters;   // empty when not clustered
  bool add_intercept = true;
  std::vector<std::string> instrument_names;
  std::vector<std::string> covariate_names;
  std::string outcome_name = "y";
  std::string treatment_name = "d";

  Eigen::Index n() const { return y.size(); }
  int p_z() const { return static_cast<int>(Z.cols()); }
  bool just_identified() const { return Z.cols() == 1; }
  void validate() const;

  static IVModel from_dataset(const Dataset& data);
};

// The same study after partialling the covariates (and intercept) out of
// y, d, and every instrument column in one shared pass.
struct ResidualizedIV {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::MatrixXd Z;
  int absorbed_rank = 0;
  std::vector<int> clusters;
  std::vector<std::string> instrument_names;
  // Column norms of Z before partialling.  A residual column at roundoff
  // scale relative to this is one the controls span exactly, which a purely
  // relative rank test on the residual block cannot see.
  Eigen::VectorXd z_prescale;
};

ResidualizedIV residualize(const IVModel& model);

// (Z'Z)^{-1} on the residualized instrument block.  Collinear instruments
// (including ones absorbed entirely by the covariates) raise CollinearityError
// with the offending names.
Eigen::MatrixXd instrument_gram_inverse(const ResidualizedIV& rm);

// Everything downstream consumers need from a two-stage fit: the projection
// of d on the instrument span, the coefficient, and structural residuals
// y - tau * d (all in the residualized coordinates).
struct TSLSParts {
  ResidualizedIV rm;
  Eigen::MatrixXd ZtZ_inv;
  Eigen::RowVectorXd dZ;     // d'Z
  Eigen::VectorXd d_hat;     // fitted first stage
  double denom = 0.0;        // d' P_Z d
  double tau = 0.0;
  Eigen::VectorXd residuals; // structural
  Eigen::Index k_total = 0;  // 1 + absorbed rank
};

TSLSParts tsls_parts(const IVModel& model);

// Row-indexed copy of the model, used by every resampling routine.  Cluster
// codes are taken from the draw, where each sampled cluster is relabeled.
IVModel subset_model(const IVModel& model, const Resample& draw);

// Sandwich variance of tau for one flavor, from precomputed parts.
double tsls_vcov_scalar(const TSLSParts& parts, VCovFlavor flavor);

// Two-stage least squares for the treatment coefficient.  Covariances use the
// structural residuals.  The bootstrap flavor resamples rows (or clusters)
// and repeats the whole fit, including the partialling-out step.
FitResult tsls_fit(const IVModel& model, const FitOptions& opts);

// First-stage and reduced-form fits on the shared residualized design.
// Returned pair is (first_stage, reduced_form).
std::pair<FitResult, FitResult> component_fits(const IVModel& model, const FitOptions& opts);

// Difference-in-means ratio for a binary instrument without covariates.
double wald_ratio(const IVModel& model);

// Side-by-side comparison of the instrumented and uninstrumented estimates.
struct DiscrepancyReport {
  double tau_2sls = 0.0;
  double tau_ols = 0.0;
  double se_2sls = 0.0;
  double se_ols = 0.0;
  double ratio_abs = 0.0;   // |tau_2sls / tau_ols|; NaN when tau_ols == 0
  double se_ratio = 0.0;    // se_2sls / se_ols
  bool same_sign = false;   // strict; false when either estimate is 0
  bool ols_zero = false;
};

DiscrepancyReport discrepancy(const IVModel& model, const FitOptions& opts);

}  // namespace ivdiag
