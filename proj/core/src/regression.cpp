#include "ivdiag/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ivdiag/bootstrap.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/rng.hpp"

namespace ivdiag {

namespace {

// Relative pivot threshold for rank decisions, applied to a column-pivoted QR.
constexpr double kRankThreshold = 1e-10;

std::vector<std::string> default_terms(bool intercept, Eigen::Index p,
                                       const std::vector<std::string>& given) {
  std::vector<std::string> terms;
  if (intercept) terms.push_back("(intercept)");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (static_cast<std::size_t>(j) < given.size()) terms.push_back(given[static_cast<std::size_t>(j)]);
    else terms.push_back("x" + std::to_string(j + 1));
  }
  return terms;
}

Eigen::MatrixXd assemble_design(const Eigen::MatrixXd& X, bool intercept) {
  if (!intercept) return X;
  Eigen::MatrixXd D(X.rows(), X.cols() + 1);
  D.col(0).setOnes();
  if (X.cols() > 0) D.rightCols(X.cols()) = X;
  return D;
}

struct Decomposition {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  Eigen::MatrixXd bread;  // (X'X)^{-1}
};

Decomposition decompose(const Eigen::MatrixXd& D, const std::vector<std::string>& terms) {
  Decomposition dec;
  dec.qr.setThreshold(kRankThreshold);
  dec.qr.compute(D);
  const Eigen::Index k = D.cols();
  const Eigen::Index rank = dec.qr.rank();
  if (rank < k) {
    // The permutation moves dependent columns to the tail; name them.
    const auto& perm = dec.qr.colsPermutation().indices();
    std::string names;
    for (Eigen::Index j = rank; j < k; ++j) {
      if (!names.empty()) names += ", ";
      names += terms[static_cast<std::size_t>(perm[j])];
    }
    throw CollinearityError("design is rank deficient (rank " + std::to_string(rank) + " of " +
                            std::to_string(k) + "); dependent columns: " + names);
  }
  // X P = Q R, so (X'X)^{-1} = P (R'R)^{-1} P'.
  const Eigen::MatrixXd R = dec.qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
  const auto& P = dec.qr.colsPermutation();
  dec.bread = P * inner * P.transpose();
  return dec;
}

}  // namespace

std::string to_string(VCovFlavor flavor) {
  switch (flavor) {
    case VCovFlavor::classic: return "classic";
    case VCovFlavor::hc1: return "hc1";
    case VCovFlavor::cr1: return "cr1";
    case VCovFlavor::bootstrap: return "bootstrap";
  }
  return "?";
}

VCovFlavor vcov_flavor_from_string(const std::string& s) {
  if (s == "classic") return VCovFlavor::classic;
  if (s == "hc1") return VCovFlavor::hc1;
  if (s == "cr1") return VCovFlavor::cr1;
  if (s == "bootstrap") return VCovFlavor::bootstrap;
  throw ConfigError("unknown vcov flavor '" + s + "'");
}

Eigen::MatrixXd sandwich_vcov(const FitInternals& fit, VCovFlavor flavor,
                              const std::vector<int>* clusters) {
  const Eigen::Index n = fit.X.rows();
  const Eigen::Index k = fit.k_total;
  const double df = static_cast<double>(n - k);
  if (df <= 0) throw DegreesOfFreedomError("no residual degrees of freedom");
  switch (flavor) {
    case VCovFlavor::classic: {
      const double sigma2 = fit.residuals.squaredNorm() / df;
      return sigma2 * fit.bread;
    }
    case VCovFlavor::hc1: {
      const Eigen::MatrixXd Xe = fit.X.array().colwise() * fit.residuals.array();
      const Eigen::MatrixXd meat = Xe.transpose() * Xe;
      const double factor = static_cast<double>(n) / df;
      return factor * fit.bread * meat * fit.bread;
    }
    case VCovFlavor::cr1: {
      if (clusters == nullptr || static_cast<Eigen::Index>(clusters->size()) != n) {
        throw ClusterCountError("cr1 requires one cluster id per row");
      }
      int G = 0;
      for (int c : *clusters) G = std::max(G, c + 1);
      if (G < 2) throw ClusterCountError("cr1 requires at least 2 clusters");
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(G, fit.X.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row((*clusters)[static_cast<std::size_t>(i)]) += fit.residuals[i] * fit.X.row(i);
      }
      const Eigen::MatrixXd meat = sums.transpose() * sums;
      const double factor = (static_cast<double>(G) / (G - 1.0)) * ((n - 1.0) / df);
      return factor * fit.bread * meat * fit.bread;
    }
    case VCovFlavor::bootstrap:
      throw PreconditionError("bootstrap covariance is produced by the fitting routines");
  }
  throw PreconditionError("unreachable vcov flavor");
}

namespace {

void finalize(FitResult* fit) {
  const Eigen::Index k = fit->coef.size();
  fit->vcov = 0.5 * (fit->vcov + fit->vcov.transpose()).eval();
  fit->se.resize(k);
  fit->tstat.resize(k);
  fit->pvalue.resize(k);
  fit->ci_low.resize(k);
  fit->ci_high.resize(k);
  const double z = stats::norm_quantile(1.0 - fit->alpha / 2.0);
  for (Eigen::Index j = 0; j < k; ++j) {
    double v = fit->vcov(j, j);
    if (v < 0.0 && v > -1e-12 * (1.0 + fit->vcov.trace())) v = 0.0;  // fp dust
    fit->se[j] = std::sqrt(std::max(v, 0.0));
    if (fit->se[j] > 0.0) {
      fit->tstat[j] = fit->coef[j] / fit->se[j];
    } else {
      fit->tstat[j] = fit->coef[j] == 0.0 ? 0.0
                      : std::numeric_limits<double>::infinity() * (fit->coef[j] > 0 ? 1.0 : -1.0);
    }
    fit->pvalue[j] = stats::two_sided_p(fit->tstat[j]);
    fit->ci_low[j] = fit->coef[j] - z * fit->se[j];
    fit->ci_high[j] = fit->coef[j] + z * fit->se[j];
  }
}

}  // namespace

FitResult ols_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const FitOptions& opts) {
  const Eigen::Index n = y.size();
  if (X.rows() != n) throw PreconditionError("ols_fit: y and X have different row counts");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw ConfigError("alpha outside (0,1)");

  const Eigen::MatrixXd D = assemble_design(X, opts.add_intercept);
  const Eigen::Index k = D.cols();
  if (k == 0) throw PreconditionError("ols_fit: empty design");
  const Eigen::Index k_total = k + opts.absorbed_rank;
  if (n <= k_total) {
    throw DegreesOfFreedomError("n = " + std::to_string(n) + " rows but " +
                                std::to_string(k_total) + " model parameters");
  }
  const auto terms = default_terms(opts.add_intercept, X.cols(), opts.term_names);
  const auto dec = decompose(D, terms);

  FitResult fit;
  fit.terms = terms;
  fit.coef = dec.qr.solve(y);
  fit.fitted = D * fit.coef;
  fit.residuals = y - fit.fitted;
  fit.n = n;
  fit.df_residual = n - k_total;
  fit.sigma2_hat = fit.residuals.squaredNorm() / static_cast<double>(fit.df_residual);
  fit.alpha = opts.alpha;
  fit.flavor = opts.flavor;

  if (opts.flavor == VCovFlavor::bootstrap) {
    if (opts.boot_reps < 2) throw ConfigError("bootstrap flavor needs boot_reps >= 2");
    const auto run = run_bootstrap(
        opts.boot_reps, opts.seed, streams::kOlsBootstrap, opts.threads, n, opts.clusters,
        static_cast<int>(k), [&](const Resample& rs, Eigen::Ref<Eigen::VectorXd> out) {
          Eigen::MatrixXd Db(static_cast<Eigen::Index>(rs.rows.size()), k);
          Eigen::VectorXd yb(static_cast<Eigen::Index>(rs.rows.size()));
          for (std::size_t i = 0; i < rs.rows.size(); ++i) {
            Db.row(static_cast<Eigen::Index>(i)) = D.row(rs.rows[i]);
            yb[static_cast<Eigen::Index>(i)] = y[rs.rows[i]];
          }
          Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Db);
          qr.setThreshold(kRankThreshold);
          if (qr.rank() < k) return false;
          out = qr.solve(yb);
          return true;
        });
    fit.vcov = bootstrap_cov(run);
    fit.boot_kept = run.kept;
    fit.boot_dropped = run.dropped;
  } else {
    const FitInternals internals{D, fit.residuals, dec.bread, k_total};
    fit.vcov = sandwich_vcov(internals, opts.flavor, opts.clusters);
  }
  finalize(&fit);
  return fit;
}

Eigen::MatrixXd residualize_on(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& controls,
                               bool add_intercept, const std::vector<std::string>* control_names) {
  const Eigen::Index n = targets.rows();
  if (controls.rows() != n) {
    throw PreconditionError("residualize_on: row count mismatch");
  }
  const Eigen::MatrixXd D = assemble_design(controls, add_intercept);
  if (D.cols() == 0) return targets;
  if (n <= D.cols()) {
    throw DegreesOfFreedomError("residualize_on: more controls than rows");
  }
  const auto terms = default_terms(add_intercept, controls.cols(),
                                   control_names ? *control_names : std::vector<std::string>{});
  const auto dec = decompose(D, terms);
  Eigen::MatrixXd out(n, targets.cols());
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    out.col(j) = targets.col(j) - D * dec.qr.solve(targets.col(j));
  }
  return out;
}

Dataset fwl_residualize(const Dataset& data, const std::vector<std::string>& targets,
                        const std::vector<std::string>& controls) {
  if (targets.empty()) throw PreconditionError("fwl_residualize: no target columns");
  const Eigen::MatrixXd T = data.cols(targets);
  const Eigen::MatrixXd C = data.cols(controls);
  const Eigen::MatrixXd R = residualize_on(T, C, true, &controls);
  Dataset out = data;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    for (std::size_t c = 0; c < out.names.size(); ++c) {
      if (out.names[c] == targets[j]) {
        out.columns[c] = R.col(static_cast<Eigen::Index>(j));
      }
    }
  }
  return out;
}

}  // namespace ivdiag
