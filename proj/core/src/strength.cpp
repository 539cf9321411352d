#include "ivdiag/strength.hpp"

#include <cmath>
#include <limits>

#include "ivdiag/bootstrap.hpp"
#include "ivdiag/rng.hpp"

namespace ivdiag {

namespace {

// Solves V x = b and checks the solution actually satisfies the system; LDLT
// quietly produces garbage on singular input.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& V, const Eigen::VectorXd& b,
                          const std::string& what) {
  // A covariance at roundoff scale relative to the coefficients (an exact
  // linear relation in the data) is zero for all practical purposes; inverting
  // it would report an astronomically large statistic instead of refusing.
  const double bscale = b.cwiseAbs().maxCoeff();
  if (V.cwiseAbs().maxCoeff() <= 1e-24 * bscale * bscale) {
    throw SingularVCovError(what + ": covariance is numerically zero");
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(V);
  if (ldlt.info() != Eigen::Success) throw SingularVCovError(what + ": decomposition failed");
  const Eigen::VectorXd x = ldlt.solve(b);
  const double resid = (V * x - b).cwiseAbs().maxCoeff();
  const double scale = b.cwiseAbs().maxCoeff() + V.cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff();
  if (!std::isfinite(resid) || resid > 1e-8 * (scale + 1e-300)) {
    throw SingularVCovError(what + ": covariance is singular");
  }
  return x;
}

}  // namespace

double partial_f(const FitResult& first_stage) {
  const auto k = first_stage.coef.size();
  if (k == 0) throw PreconditionError("partial_f: empty coefficient block");
  const Eigen::VectorXd x = solve_spd(first_stage.vcov, first_stage.coef, "partial_f");
  const double wald = first_stage.coef.dot(x);
  if (!std::isfinite(wald) || wald < 0) throw SingularVCovError("partial_f: indefinite covariance");
  return wald / static_cast<double>(k);
}

double effective_f(const FitResult& first_stage, const Eigen::MatrixXd& Z_res) {
  const auto n = Z_res.rows();
  const auto k = first_stage.coef.size();
  if (Z_res.cols() != k) throw PreconditionError("effective_f: coefficient/instrument mismatch");
  const Eigen::MatrixXd Q = (Z_res.transpose() * Z_res) / static_cast<double>(n);
  const double num = first_stage.coef.dot(Q * first_stage.coef);
  const double den = (first_stage.vcov * Q).trace();
  if (!(den > 0.0)) throw SingularVCovError("effective_f: degenerate covariance trace");
  return num / den;
}

double rho_d_dhat(const Eigen::VectorXd& d_res, const Eigen::VectorXd& d_hat) {
  if (d_res.size() != d_hat.size() || d_res.size() < 2) {
    throw PreconditionError("rho_d_dhat: need two equally sized vectors");
  }
  const Eigen::VectorXd a = d_res.array() - d_res.mean();
  const Eigen::VectorXd b = d_hat.array() - d_hat.mean();
  const double sa = a.norm();
  const double sb = b.norm();
  if (!(sa > 0.0)) throw DegenerateFirstStageError("treatment is constant");
  if (!(sb > 1e-12 * sa)) {
    throw DegenerateFirstStageError("first-stage fitted values are constant");
  }
  return a.dot(b) / (sa * sb);
}

BootstrapFResult bootstrap_f(const IVModel& model, const FitOptions& opts) {
  if (opts.boot_reps < 2) throw ConfigError("bootstrap_f needs boot_reps >= 2");
  const int pz = model.p_z();
  const auto full = tsls_parts(model);
  const Eigen::VectorXd pi_hat = full.ZtZ_inv * full.dZ.transpose();

  const auto* clusters = model.clusters.empty() ? nullptr : &model.clusters;
  const auto run = run_bootstrap(
      opts.boot_reps, opts.seed, streams::kFirstStageBootstrap, opts.threads, model.n(), clusters,
      pz + 1, [&](const Resample& rs, Eigen::Ref<Eigen::VectorXd> out) {
        const auto parts = tsls_parts(subset_model(model, rs));
        out.head(pz) = parts.ZtZ_inv * parts.dZ.transpose();
        out[pz] = parts.tau;
        return true;
      });

  BootstrapFResult result;
  result.kept = run.kept;
  result.dropped = run.dropped;
  const Eigen::MatrixXd cov = bootstrap_cov(run);
  const Eigen::MatrixXd V_pi = cov.topLeftCorner(pz, pz);
  const double v_tau = cov(pz, pz);

  try {
    const Eigen::VectorXd x = solve_spd(V_pi, pi_hat, "bootstrap_f");
    const double wald = pi_hat.dot(x);
    if (!std::isfinite(wald) || wald < 0) throw SingularVCovError("bootstrap_f: indefinite spread");
    result.f_pi = wald / static_cast<double>(pz);
  } catch (const SingularVCovError&) {
    // Zero resampling spread: the first stage is mechanically exact.
    result.f_pi = std::numeric_limits<double>::infinity();
    result.degenerate = true;
  }
  if (v_tau > 0.0) {
    result.f_tau = full.tau * full.tau / v_tau / static_cast<double>(pz);
  } else {
    result.f_tau = std::numeric_limits<double>::infinity();
    result.degenerate = true;
  }
  return result;
}

StrengthReport strength_report(const IVModel& model, const FitOptions& opts) {
  StrengthReport rep;
  rep.p_z = model.p_z();

  FitOptions stage = opts;
  stage.flavor = VCovFlavor::classic;
  auto [first_classic, reduced_unused] = component_fits(model, stage);
  (void)reduced_unused;
  rep.f_classic = partial_f(first_classic);

  const ResidualizedIV rm = residualize(model);
  FitOptions robust = opts;
  robust.add_intercept = false;
  robust.absorbed_rank = rm.absorbed_rank;
  robust.term_names = model.instrument_names;
  robust.flavor = VCovFlavor::hc1;
  robust.clusters = nullptr;
  const FitResult first_hc1 = ols_fit(rm.d, rm.Z, robust);
  rep.f_robust = partial_f(first_hc1);

  const FitResult* effective_fit = &first_hc1;
  FitResult first_cr1;
  if (!rm.clusters.empty()) {
    FitOptions clustered = robust;
    clustered.flavor = VCovFlavor::cr1;
    clustered.clusters = &rm.clusters;
    first_cr1 = ols_fit(rm.d, rm.Z, clustered);
    rep.f_cluster = partial_f(first_cr1);
    effective_fit = &first_cr1;
  }
  rep.f_effective = effective_f(*effective_fit, rm.Z);

  rep.rho_d_dhat = rho_d_dhat(rm.d, first_hc1.fitted);
  rep.partial_r2 = rep.rho_d_dhat * rep.rho_d_dhat;
  rep.passes_rule_of_thumb = rep.f_effective > 10.0;

  const auto boot = bootstrap_f(model, opts);
  rep.f_boot = boot.f_pi;
  rep.f_boot_tau = boot.f_tau;
  rep.boot_degenerate = boot.degenerate;
  rep.boot_reps = opts.boot_reps;
  rep.boot_kept = boot.kept;
  rep.boot_dropped = boot.dropped;
  return rep;
}

}  // namespace ivdiag
