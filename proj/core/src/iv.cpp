#include "ivdiag/iv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ivdiag/bootstrap.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/rng.hpp"

namespace ivdiag {

void IVModel::validate() const {
  const Eigen::Index rows = y.size();
  if (d.size() != rows || Z.rows() != rows) {
    throw PreconditionError("outcome, treatment, and instruments must have equal row counts");
  }
  if (covariates.cols() > 0 && covariates.rows() != rows) {
    throw PreconditionError("covariate rows do not match the outcome");
  }
  if (!clusters.empty() && static_cast<Eigen::Index>(clusters.size()) != rows) {
    throw ClusterCountError("cluster ids must cover every row");
  }
  if (Z.cols() == 0) throw PreconditionError("at least one instrument is required");
}

IVModel IVModel::from_dataset(const Dataset& data) {
  const auto& roles = data.roles;
  IVModel m;
  m.y = data.col(roles.outcome);
  m.d = data.col(roles.treatment);
  m.Z = data.cols(roles.instruments);
  m.covariates = data.cols(roles.covariates);
  m.clusters = data.cluster_codes;
  m.instrument_names = roles.instruments;
  m.covariate_names = roles.covariates;
  m.outcome_name = roles.outcome;
  m.treatment_name = roles.treatment;

  if (roles.weight) {
    // Weight pass-through: scale every column by sqrt(w).  The intercept
    // becomes an explicit sqrt(w) column so it is scaled consistently.
    const Eigen::ArrayXd s = data.col(*roles.weight).array().sqrt();
    m.y.array() *= s;
    m.d.array() *= s;
    m.Z.array().colwise() *= s;
    Eigen::MatrixXd cov(m.y.size(), m.covariates.cols() + 1);
    cov.col(0) = s.matrix();
    if (m.covariates.cols() > 0) {
      cov.rightCols(m.covariates.cols()) = m.covariates.array().colwise() * s;
    }
    m.covariates = std::move(cov);
    std::vector<std::string> names{"(intercept)"};
    names.insert(names.end(), m.covariate_names.begin(), m.covariate_names.end());
    m.covariate_names = std::move(names);
    m.add_intercept = false;
  }
  m.validate();
  return m;
}

ResidualizedIV residualize(const IVModel& model) {
  model.validate();
  ResidualizedIV rm;
  rm.clusters = model.clusters;
  rm.instrument_names = model.instrument_names;
  const Eigen::Index pz = model.Z.cols();
  rm.z_prescale = model.Z.colwise().norm();
  if (model.covariates.cols() == 0 && !model.add_intercept) {
    rm.y = model.y;
    rm.d = model.d;
    rm.Z = model.Z;
    rm.absorbed_rank = 0;
    return rm;
  }
  Eigen::MatrixXd targets(model.n(), 2 + pz);
  targets.col(0) = model.y;
  targets.col(1) = model.d;
  targets.rightCols(pz) = model.Z;
  const Eigen::MatrixXd R = residualize_on(targets, model.covariates, model.add_intercept,
                                           &model.covariate_names);
  rm.y = R.col(0);
  rm.d = R.col(1);
  rm.Z = R.rightCols(pz);
  rm.absorbed_rank =
      static_cast<int>(model.covariates.cols()) + (model.add_intercept ? 1 : 0);
  return rm;
}

Eigen::MatrixXd instrument_gram_inverse(const ResidualizedIV& rm) {
  const Eigen::Index pz = rm.Z.cols();
  // A column the controls span exactly leaves only roundoff noise behind; the
  // rank test below is relative to the largest pivot and cannot notice, so
  // compare each residual column against its own pre-partialling norm first.
  if (rm.z_prescale.size() == pz) {
    std::string absorbed;
    for (Eigen::Index j = 0; j < pz; ++j) {
      if (rm.Z.col(j).norm() <= 1e-12 * rm.z_prescale[j]) {
        if (!absorbed.empty()) absorbed += ", ";
        absorbed += rm.instrument_names.size() > static_cast<std::size_t>(j)
                        ? rm.instrument_names[static_cast<std::size_t>(j)]
                        : ("z" + std::to_string(j + 1));
      }
    }
    if (!absorbed.empty()) {
      throw CollinearityError("instruments are collinear after partialling out: " + absorbed);
    }
  }
  // Collinearity is checked on the residualized block, where a covariate-
  // spanned instrument shows up as a zero column.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(rm.Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < pz) {
    const auto& perm = qr.colsPermutation().indices();
    std::string names;
    for (Eigen::Index j = qr.rank(); j < pz; ++j) {
      if (!names.empty()) names += ", ";
      names += rm.instrument_names.size() > static_cast<std::size_t>(perm[j])
                   ? rm.instrument_names[static_cast<std::size_t>(perm[j])]
                   : ("z" + std::to_string(perm[j] + 1));
    }
    throw CollinearityError("instruments are collinear after partialling out: " + names);
  }
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(pz, pz).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(pz, pz));
  const auto& P = qr.colsPermutation();
  return P * (Rinv * Rinv.transpose()) * P.transpose();
}

TSLSParts tsls_parts(const IVModel& model) {
  TSLSParts parts;
  parts.rm = residualize(model);
  const auto& rm = parts.rm;
  const Eigen::Index n = rm.y.size();
  const Eigen::Index pz = rm.Z.cols();
  parts.k_total = 1 + rm.absorbed_rank;
  if (n <= rm.absorbed_rank + std::max<Eigen::Index>(pz, 1)) {
    throw DegreesOfFreedomError("too few rows for the two-stage fit");
  }
  parts.ZtZ_inv = instrument_gram_inverse(rm);
  parts.dZ = rm.d.transpose() * rm.Z;
  parts.d_hat = rm.Z * (parts.ZtZ_inv * parts.dZ.transpose());
  parts.denom = parts.d_hat.squaredNorm();

  const double dd = rm.d.squaredNorm();
  // corr(d, d_hat)^2 = denom / d'd for a projection; the fit is unusable when
  // the correlation falls below 1e-12.
  if (!(parts.denom > 0.0) || parts.denom <= 1e-24 * dd) {
    throw DegenerateFirstStageError("first-stage fitted values carry no variation");
  }
  parts.tau = parts.d_hat.dot(rm.y) / parts.denom;
  parts.residuals = rm.y - parts.tau * rm.d;
  return parts;
}

double tsls_vcov_scalar(const TSLSParts& parts, VCovFlavor flavor) {
  const Eigen::MatrixXd X = parts.d_hat;
  Eigen::MatrixXd bread(1, 1);
  bread(0, 0) = 1.0 / parts.denom;
  const FitInternals internals{X, parts.residuals, bread, parts.k_total};
  const auto* clusters = parts.rm.clusters.empty() ? nullptr : &parts.rm.clusters;
  return sandwich_vcov(internals, flavor, clusters)(0, 0);
}

IVModel subset_model(const IVModel& model, const Resample& draw) {
  IVModel out;
  const auto n = static_cast<Eigen::Index>(draw.rows.size());
  out.y.resize(n);
  out.d.resize(n);
  out.Z.resize(n, model.Z.cols());
  out.covariates.resize(n, model.covariates.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = draw.rows[static_cast<std::size_t>(i)];
    out.y[i] = model.y[r];
    out.d[i] = model.d[r];
    out.Z.row(i) = model.Z.row(r);
    if (model.covariates.cols() > 0) out.covariates.row(i) = model.covariates.row(r);
  }
  out.clusters = draw.clusters;
  out.add_intercept = model.add_intercept;
  out.instrument_names = model.instrument_names;
  out.covariate_names = model.covariate_names;
  out.outcome_name = model.outcome_name;
  out.treatment_name = model.treatment_name;
  return out;
}

FitResult tsls_fit(const IVModel& model, const FitOptions& opts) {
  const auto parts = tsls_parts(model);
  FitResult fit;
  fit.terms = {model.treatment_name};
  fit.coef = Eigen::VectorXd::Constant(1, parts.tau);
  fit.n = parts.rm.y.size();
  fit.df_residual = fit.n - parts.k_total;
  fit.sigma2_hat = parts.residuals.squaredNorm() / static_cast<double>(fit.df_residual);
  fit.alpha = opts.alpha;
  fit.flavor = opts.flavor;
  fit.residuals = parts.residuals;
  fit.fitted = parts.rm.y - parts.residuals;

  if (opts.flavor == VCovFlavor::bootstrap) {
    if (opts.boot_reps < 2) throw ConfigError("bootstrap flavor needs boot_reps >= 2");
    const auto* clusters = model.clusters.empty() ? nullptr : &model.clusters;
    const auto run = run_bootstrap(
        opts.boot_reps, opts.seed, streams::kTslsBootstrap, opts.threads, model.n(), clusters, 1,
        [&](const Resample& rs, Eigen::Ref<Eigen::VectorXd> out) {
          out[0] = tsls_parts(subset_model(model, rs)).tau;
          return true;
        });
    fit.vcov = bootstrap_cov(run);
    fit.boot_kept = run.kept;
    fit.boot_dropped = run.dropped;
  } else {
    fit.vcov = Eigen::MatrixXd::Constant(1, 1, tsls_vcov_scalar(parts, opts.flavor));
  }

  const double z = stats::norm_quantile(1.0 - opts.alpha / 2.0);
  const double v = std::max(fit.vcov(0, 0), 0.0);
  fit.se = Eigen::VectorXd::Constant(1, std::sqrt(v));
  fit.tstat = Eigen::VectorXd::Constant(
      1, fit.se[0] > 0 ? fit.coef[0] / fit.se[0]
                       : (fit.coef[0] == 0 ? 0.0 : std::copysign(1.0, fit.coef[0]) *
                                                       std::numeric_limits<double>::infinity()));
  fit.pvalue = Eigen::VectorXd::Constant(1, stats::two_sided_p(fit.tstat[0]));
  fit.ci_low = Eigen::VectorXd::Constant(1, fit.coef[0] - z * fit.se[0]);
  fit.ci_high = Eigen::VectorXd::Constant(1, fit.coef[0] + z * fit.se[0]);
  return fit;
}

std::pair<FitResult, FitResult> component_fits(const IVModel& model, const FitOptions& opts) {
  const ResidualizedIV rm = residualize(model);
  FitOptions stage = opts;
  stage.add_intercept = false;
  stage.absorbed_rank = rm.absorbed_rank;
  stage.clusters = rm.clusters.empty() ? nullptr : &rm.clusters;
  stage.term_names = model.instrument_names;
  FitResult first = ols_fit(rm.d, rm.Z, stage);
  FitResult reduced = ols_fit(rm.y, rm.Z, stage);
  return {std::move(first), std::move(reduced)};
}

double wald_ratio(const IVModel& model) {
  model.validate();
  if (model.p_z() != 1) throw PreconditionError("wald_ratio needs exactly one instrument");
  if (model.covariates.cols() > 0) throw PreconditionError("wald_ratio does not accept covariates");
  const auto& z = model.Z.col(0);
  std::set<double> levels(z.data(), z.data() + z.size());
  if (levels.size() != 2) throw PreconditionError("wald_ratio needs a binary instrument");
  const double hi = *levels.rbegin();
  double y1 = 0, y0 = 0, d1 = 0, d0 = 0;
  Eigen::Index n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == hi) {
      y1 += model.y[i];
      d1 += model.d[i];
      ++n1;
    } else {
      y0 += model.y[i];
      d0 += model.d[i];
      ++n0;
    }
  }
  const double d_gap = d1 / n1 - d0 / n0;
  if (d_gap == 0.0) throw DegenerateFirstStageError("treatment means are equal across instrument arms");
  return (y1 / n1 - y0 / n0) / d_gap;
}

DiscrepancyReport discrepancy(const IVModel& model, const FitOptions& opts) {
  DiscrepancyReport rep;
  const FitResult iv = tsls_fit(model, opts);

  Eigen::MatrixXd X(model.n(), 1 + model.covariates.cols());
  X.col(0) = model.d;
  if (model.covariates.cols() > 0) X.rightCols(model.covariates.cols()) = model.covariates;
  FitOptions ols_opts = opts;
  ols_opts.flavor = opts.flavor == VCovFlavor::bootstrap ? VCovFlavor::hc1 : opts.flavor;
  ols_opts.add_intercept = model.add_intercept;
  ols_opts.clusters = model.clusters.empty() ? nullptr : &model.clusters;
  ols_opts.term_names = {model.treatment_name};
  ols_opts.term_names.insert(ols_opts.term_names.end(), model.covariate_names.begin(),
                             model.covariate_names.end());
  const FitResult ols = ols_fit(model.y, X, ols_opts);
  const Eigen::Index d_at = model.add_intercept ? 1 : 0;

  rep.tau_2sls = iv.coef[0];
  rep.tau_ols = ols.coef[d_at];
  rep.se_2sls = iv.se[0];
  rep.se_ols = ols.se[d_at];
  rep.ols_zero = rep.tau_ols == 0.0;
  rep.ratio_abs = rep.ols_zero ? std::nan("") : std::abs(rep.tau_2sls / rep.tau_ols);
  rep.se_ratio = rep.se_ols > 0 ? rep.se_2sls / rep.se_ols : std::nan("");
  rep.same_sign = (rep.tau_2sls > 0 && rep.tau_ols > 0) || (rep.tau_2sls < 0 && rep.tau_ols < 0);
  return rep;
}

}  // namespace ivdiag
