#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ivdiag/inference.hpp"
#include "ivdiag/iv.hpp"
#include "ivdiag/regression.hpp"

namespace ivdiag {

// Prior belief about the instruments' direct effect on the outcome, used to
// debias the instrumented estimate.
struct LTZPrior {
  Eigen::VectorXd mu;     // prior mean, one entry per instrument
  Eigen::MatrixXd omega;  // prior covariance, symmetric PSD

  void validate(Eigen::Index p_z) const;
};

// Shift the point estimate by the prior mean mapped through the sensitivity
// row A = (d'P_Z d)^{-1} d'Z (on residualized data) and widen the variance by
// A omega A'.
InferenceResult ltz_adjust(const IVModel& model, const LTZPrior& prior, const FitOptions& opts);

// Placebo regressions on a subsample where the instrument is believed to have
// no path into the treatment: the reduced form estimates the direct effect,
// and the subsample first stage lets the caller audit that premise.
struct ZFSReport {
  FitResult reduced_form;  // y on instruments (+ absorbed covariates), subsample
  FitResult first_stage;   // d on instruments (+ absorbed covariates), subsample
  double first_stage_f = 0.0;
  Eigen::Index n_subsample = 0;
  Eigen::Index n_total = 0;

  // Convenience wiring: use the placebo fit as an LTZ prior.
  LTZPrior as_prior() const;
};

ZFSReport zfs_placebo(const IVModel& model, const std::vector<Eigen::Index>& rows,
                      const FitOptions& opts);

}  // namespace ivdiag
