#include "ivdiag/ltz.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ivdiag/errors.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/strength.hpp"

namespace ivdiag {

void LTZPrior::validate(Eigen::Index p_z) const {
  if (mu.size() != p_z) {
    throw ConfigError("ltz prior mean must have one entry per instrument (expected " +
                      std::to_string(p_z) + ", got " + std::to_string(mu.size()) + ")");
  }
  if (omega.rows() != p_z || omega.cols() != p_z) {
    throw ConfigError("ltz prior covariance must be " + std::to_string(p_z) + "x" +
                      std::to_string(p_z));
  }
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError("ltz prior covariance must be symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw ConfigError("ltz prior covariance must be positive semidefinite");
  }
}

InferenceResult ltz_adjust(const IVModel& model, const LTZPrior& prior, const FitOptions& opts) {
  const auto parts = tsls_parts(model);
  prior.validate(parts.rm.Z.cols());

  const Eigen::RowVectorXd a_row = (parts.rm.d.transpose() * parts.rm.Z) / parts.denom;
  const double tau_adj = parts.tau - a_row.dot(prior.mu);
  const VCovFlavor flavor =
      opts.flavor == VCovFlavor::bootstrap
          ? (model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1)
          : opts.flavor;
  const double v_base = tsls_vcov_scalar(parts, flavor);
  const double v_adj = v_base + a_row * prior.omega * a_row.transpose();
  if (!(v_adj >= 0.0) || !std::isfinite(v_adj)) {
    throw SingularVCovError("ltz-adjusted variance is not finite");
  }
  const double se = std::sqrt(v_adj);

  InferenceResult res;
  res.method = "ltz";
  res.alpha = opts.alpha;
  res.point = tau_adj;
  const double z = stats::norm_quantile(1.0 - opts.alpha / 2.0);
  res.ci = IntervalSet::bounded(tau_adj - z * se, tau_adj + z * se);
  res.p_null = se > 0.0 ? stats::two_sided_p(tau_adj / se) : (tau_adj == 0.0 ? 1.0 : 0.0);
  res.meta["tau_unadjusted"] = parts.tau;
  res.meta["se_unadjusted"] = std::sqrt(std::max(v_base, 0.0));
  res.meta["se"] = se;
  for (Eigen::Index j = 0; j < a_row.size(); ++j) {
    res.meta["a_" + std::to_string(j)] = a_row[j];
  }
  return res;
}

ZFSReport zfs_placebo(const IVModel& model, const std::vector<Eigen::Index>& rows,
                      const FitOptions& opts) {
  model.validate();
  if (rows.empty()) throw PreconditionError("placebo subsample is empty");
  for (const auto r : rows) {
    if (r < 0 || r >= model.n()) throw PreconditionError("placebo row index out of range");
  }

  // Restrict every column to the chosen rows; cluster codes are compacted but
  // keep their grouping.
  IVModel sub;
  const auto m = static_cast<Eigen::Index>(rows.size());
  sub.y.resize(m);
  sub.d.resize(m);
  sub.Z.resize(m, model.Z.cols());
  sub.covariates.resize(m, model.covariates.cols());
  if (!model.clusters.empty()) sub.clusters.reserve(rows.size());
  std::unordered_map<int, int> relabel;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    sub.y[i] = model.y[r];
    sub.d[i] = model.d[r];
    sub.Z.row(i) = model.Z.row(r);
    if (model.covariates.cols() > 0) sub.covariates.row(i) = model.covariates.row(r);
    if (!model.clusters.empty()) {
      const int code = model.clusters[static_cast<std::size_t>(r)];
      const auto [it, inserted] = relabel.emplace(code, static_cast<int>(relabel.size()));
      sub.clusters.push_back(it->second);
    }
  }
  sub.add_intercept = model.add_intercept;
  sub.instrument_names = model.instrument_names;
  sub.covariate_names = model.covariate_names;
  sub.outcome_name = model.outcome_name;
  sub.treatment_name = model.treatment_name;

  const Eigen::Index k_design =
      sub.Z.cols() + sub.covariates.cols() + (sub.add_intercept ? 1 : 0);
  if (m <= k_design) {
    throw DegreesOfFreedomError("placebo subsample has " + std::to_string(m) +
                                " rows for " + std::to_string(k_design) + " regressors");
  }

  FitOptions fit_opts = opts;
  if (fit_opts.flavor == VCovFlavor::bootstrap) {
    fit_opts.flavor = sub.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1;
  }
  auto [first_stage, reduced_form] = component_fits(sub, fit_opts);

  ZFSReport report;
  report.reduced_form = std::move(reduced_form);
  report.first_stage = std::move(first_stage);
  report.first_stage_f = partial_f(report.first_stage);
  report.n_subsample = m;
  report.n_total = model.n();
  return report;
}

LTZPrior ZFSReport::as_prior() const {
  LTZPrior prior;
  prior.mu = reduced_form.coef;
  prior.omega = reduced_form.vcov;
  return prior;
}

}  // namespace ivdiag
