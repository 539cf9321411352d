#include "ivdiag/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "ivdiag/bootstrap.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/rng.hpp"

namespace ivdiag {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// IntervalSet

std::string to_string(IntervalKind kind) {
  switch (kind) {
    case IntervalKind::bounded: return "bounded";
    case IntervalKind::unbounded_left: return "unbounded_left";
    case IntervalKind::unbounded_right: return "unbounded_right";
    case IntervalKind::whole_line: return "whole_line";
    case IntervalKind::empty: return "empty";
    case IntervalKind::disconnected: return "disconnected";
  }
  return "?";
}

bool IntervalSet::contains(double x) const {
  for (const auto& [lo, hi] : intervals) {
    if (x >= lo && x <= hi) return true;
  }
  return false;
}

double IntervalSet::total_width() const {
  double w = 0.0;
  for (const auto& [lo, hi] : intervals) w += hi - lo;
  return w;
}

IntervalSet IntervalSet::from_intervals(std::vector<std::pair<double, double>> pieces) {
  for (const auto& [lo, hi] : pieces) {
    if (std::isnan(lo) || std::isnan(hi)) throw PreconditionError("interval endpoint is NaN");
  }
  std::erase_if(pieces, [](const auto& p) { return !(p.first <= p.second); });
  std::sort(pieces.begin(), pieces.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& p : pieces) {
    if (!merged.empty() && p.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, p.second);
    } else {
      merged.push_back(p);
    }
  }
  IntervalSet out;
  out.intervals = std::move(merged);
  if (out.intervals.empty()) {
    out.kind = IntervalKind::empty;
  } else if (out.intervals.size() > 1) {
    out.kind = IntervalKind::disconnected;
  } else {
    const auto& [lo, hi] = out.intervals.front();
    const bool lo_inf = std::isinf(lo);
    const bool hi_inf = std::isinf(hi);
    if (lo_inf && hi_inf) out.kind = IntervalKind::whole_line;
    else if (lo_inf) out.kind = IntervalKind::unbounded_left;
    else if (hi_inf) out.kind = IntervalKind::unbounded_right;
    else out.kind = IntervalKind::bounded;
  }
  return out;
}

IntervalSet IntervalSet::bounded(double lo, double hi) { return from_intervals({{lo, hi}}); }
IntervalSet IntervalSet::half_line_below(double hi) { return from_intervals({{-kInf, hi}}); }
IntervalSet IntervalSet::half_line_above(double lo) { return from_intervals({{lo, kInf}}); }
IntervalSet IntervalSet::whole_line() { return from_intervals({{-kInf, kInf}}); }
IntervalSet IntervalSet::none() { return {}; }

// ---------------------------------------------------------------------------
// analytic

InferenceResult analytic_inference(const IVModel& model, const FitOptions& opts) {
  const FitResult fit = tsls_fit(model, opts);
  InferenceResult res;
  res.method = "analytic";
  res.point = fit.coef[0];
  res.ci = IntervalSet::bounded(fit.ci_low[0], fit.ci_high[0]);
  res.p_null = fit.pvalue[0];
  res.alpha = opts.alpha;
  res.meta["se"] = fit.se[0];
  return res;
}

// ---------------------------------------------------------------------------
// bootstrap

namespace {

VCovFlavor analytic_flavor(const FitOptions& opts, const IVModel& model) {
  if (opts.flavor != VCovFlavor::bootstrap) return opts.flavor;
  return model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1;
}

// Smallest alpha at which zero leaves the interval, located by bisection with
// resolution matched to the replicate count.
double invert_to_p(const std::function<IntervalSet(double)>& ci_at, int reps) {
  const auto excluded = [&](double a) { return !ci_at(a).contains(0.0); };
  const double floor_p = 1.0 / static_cast<double>(reps);
  if (!excluded(1.0 - 1e-9)) return 1.0;
  if (excluded(1e-12)) return floor_p;
  double lo = 1e-12, hi = 1.0 - 1e-9;
  while (hi - lo > 0.5 / static_cast<double>(reps)) {
    const double mid = 0.5 * (lo + hi);
    (excluded(mid) ? hi : lo) = mid;
  }
  return std::clamp(hi, floor_p, 1.0);
}

}  // namespace

BootstrapInference bootstrap_infer(const IVModel& model, const FitOptions& opts) {
  if (opts.boot_reps < 2) throw ConfigError("bootstrap_infer needs boot_reps >= 2");
  const auto parts = tsls_parts(model);
  const double tau = parts.tau;
  const VCovFlavor se_flavor = analytic_flavor(opts, model);
  const double se_full = std::sqrt(std::max(tsls_vcov_scalar(parts, se_flavor), 0.0));

  const auto* clusters = model.clusters.empty() ? nullptr : &model.clusters;
  const auto run = run_bootstrap(
      opts.boot_reps, opts.seed, streams::kInference, opts.threads, model.n(), clusters, 2,
      [&](const Resample& rs, Eigen::Ref<Eigen::VectorXd> out) {
        const auto rep = tsls_parts(subset_model(model, rs));
        const double v = tsls_vcov_scalar(rep, se_flavor);
        if (!(v > 0.0) || !std::isfinite(v)) return false;
        out[0] = rep.tau;
        out[1] = std::sqrt(v);
        return true;
      });

  std::vector<double> taus(static_cast<std::size_t>(run.kept));
  std::vector<double> tstats(static_cast<std::size_t>(run.kept));
  for (int b = 0; b < run.kept; ++b) {
    taus[static_cast<std::size_t>(b)] = run.draws(b, 0);
    tstats[static_cast<std::size_t>(b)] = (run.draws(b, 0) - tau) / run.draws(b, 1);
  }
  std::sort(taus.begin(), taus.end());
  std::sort(tstats.begin(), tstats.end());

  const auto percentile_ci = [&](double a) {
    return IntervalSet::bounded(stats::quantile_sorted(taus, a / 2.0),
                                stats::quantile_sorted(taus, 1.0 - a / 2.0));
  };
  const auto studentized_ci = [&](double a) {
    const double lo = tau + stats::quantile_sorted(tstats, a / 2.0) * se_full;
    const double hi = tau + stats::quantile_sorted(tstats, 1.0 - a / 2.0) * se_full;
    return IntervalSet::bounded(std::min(lo, hi), std::max(lo, hi));
  };

  BootstrapInference out;
  out.percentile.method = "bootstrap_c";
  out.percentile.point = tau;
  out.percentile.alpha = opts.alpha;
  out.percentile.ci = percentile_ci(opts.alpha);
  out.percentile.p_null = invert_to_p(percentile_ci, run.kept);
  out.percentile.meta["reps"] = run.requested;
  out.percentile.meta["kept"] = run.kept;
  out.percentile.meta["dropped"] = run.dropped;
  out.percentile.meta["se_full"] = se_full;

  out.studentized.method = "bootstrap_t";
  out.studentized.point = tau;
  out.studentized.alpha = opts.alpha;
  out.studentized.ci = studentized_ci(opts.alpha);
  out.studentized.p_null = invert_to_p(studentized_ci, run.kept);
  out.studentized.meta = out.percentile.meta;
  return out;
}

// ---------------------------------------------------------------------------
// confidence sets by test inversion on the instrument block

namespace {

// Precomputed pieces of the statistic
//   W(tau) = gamma(tau)' V(tau)^{-1} gamma(tau),
// where gamma(tau) = gy - tau gd are the coefficients of y - tau d on Z and
// V(tau) is the requested sandwich.  The per-row residual is affine in tau,
// e_i(tau) = p_i - tau q_i, so every flavor's meat is a quadratic matrix
// polynomial Mpp - tau (Mpq + Mpq') + tau^2 Mqq.
struct ARKernel {
  int pz = 0;
  Eigen::Index n = 0;
  double df = 0.0;
  VCovFlavor flavor = VCovFlavor::hc1;
  double factor = 1.0;  // small-sample factor of the flavor
  // Treatment carries no variation beyond the absorbed columns; every
  // tau-dependent term of the statistic is then roundoff noise and the
  // acceptance decision cannot depend on the held value.
  bool d_null = false;
  Eigen::VectorXd gy, gd;
  Eigen::MatrixXd ZtZ_inv;
  Eigen::MatrixXd Mpp, Mpq, Mqq;
  double crit = 0.0;

  Eigen::MatrixXd vcov_at(double tau) const {
    const Eigen::MatrixXd meat =
        Mpp - tau * (Mpq + Mpq.transpose()) + tau * tau * Mqq;
    if (flavor == VCovFlavor::classic) return (meat.trace() / df) * ZtZ_inv;
    return factor * ZtZ_inv * meat * ZtZ_inv;
  }

  Eigen::VectorXd gamma_at(double tau) const { return gy - tau * gd; }

  // +inf when the covariance at tau is singular against a nonzero gamma.
  double wald(double tau) const {
    const Eigen::VectorXd g = gamma_at(tau);
    const Eigen::MatrixXd V = vcov_at(tau);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(V);
    const double gscale = gy.cwiseAbs().maxCoeff() + std::abs(tau) * gd.cwiseAbs().maxCoeff();
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd x = ldlt.solve(g);
      const double resid = (V * x - g).cwiseAbs().maxCoeff();
      const double w = g.dot(x);
      if (std::isfinite(w) && w >= 0 && resid <= 1e-8 * (gscale + 1e-300)) return w;
    }
    if (g.cwiseAbs().maxCoeff() <= 1e-10 * (gscale + 1e-300)) return 0.0;
    return kInf;
  }
};

ARKernel make_kernel(const IVModel& model, const FitOptions& opts, double alpha) {
  model.validate();
  const ResidualizedIV rm = residualize(model);
  ARKernel k;
  k.pz = static_cast<int>(rm.Z.cols());
  k.n = rm.y.size();
  k.df = static_cast<double>(k.n) - k.pz - rm.absorbed_rank;
  if (k.df <= 0) throw DegreesOfFreedomError("too few rows for the instrument regression");
  k.flavor = opts.flavor == VCovFlavor::bootstrap
                 ? (model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1)
                 : opts.flavor;
  k.d_null = rm.d.squaredNorm() <= 1e-24 * model.d.squaredNorm();
  k.ZtZ_inv = instrument_gram_inverse(rm);
  k.gy = k.ZtZ_inv * (rm.Z.transpose() * rm.y);
  k.gd = k.ZtZ_inv * (rm.Z.transpose() * rm.d);
  const Eigen::VectorXd p = rm.y - rm.Z * k.gy;
  const Eigen::VectorXd q = rm.d - rm.Z * k.gd;

  switch (k.flavor) {
    case VCovFlavor::classic: {
      // the scalar sums ride in the meat trace: store p/q cross sums on the
      // diagonal of 1x1-like carriers scaled so vcov_at stays uniform
      k.Mpp = Eigen::MatrixXd::Zero(k.pz, k.pz);
      k.Mpq = Eigen::MatrixXd::Zero(k.pz, k.pz);
      k.Mqq = Eigen::MatrixXd::Zero(k.pz, k.pz);
      k.Mpp(0, 0) = p.squaredNorm();
      k.Mpq(0, 0) = p.dot(q);
      k.Mqq(0, 0) = q.squaredNorm();
      k.factor = 1.0;
      break;
    }
    case VCovFlavor::hc1: {
      const Eigen::MatrixXd Zp = rm.Z.array().colwise() * p.array();
      const Eigen::MatrixXd Zq = rm.Z.array().colwise() * q.array();
      k.Mpp = Zp.transpose() * Zp;
      k.Mpq = Zp.transpose() * Zq;
      k.Mqq = Zq.transpose() * Zq;
      k.factor = static_cast<double>(k.n) / k.df;
      break;
    }
    case VCovFlavor::cr1: {
      if (rm.clusters.empty()) throw ClusterCountError("cr1 requires cluster ids");
      int G = 0;
      for (int c : rm.clusters) G = std::max(G, c + 1);
      if (G < 2) throw ClusterCountError("cr1 requires at least 2 clusters");
      Eigen::MatrixXd Pc = Eigen::MatrixXd::Zero(G, k.pz);
      Eigen::MatrixXd Qc = Eigen::MatrixXd::Zero(G, k.pz);
      for (Eigen::Index i = 0; i < k.n; ++i) {
        const int g = rm.clusters[static_cast<std::size_t>(i)];
        Pc.row(g) += p[i] * rm.Z.row(i);
        Qc.row(g) += q[i] * rm.Z.row(i);
      }
      k.Mpp = Pc.transpose() * Pc;
      k.Mpq = Pc.transpose() * Qc;
      k.Mqq = Qc.transpose() * Qc;
      k.factor = (static_cast<double>(G) / (G - 1.0)) * ((k.n - 1.0) / k.df);
      break;
    }
    case VCovFlavor::bootstrap:
      throw PreconditionError("unreachable");
  }
  k.crit = stats::chi2_quantile(1.0 - alpha, static_cast<double>(k.pz));
  return k;
}

}  // namespace

ARTest ar_test(const IVModel& model, double tau0, const FitOptions& opts) {
  const ARKernel kernel = make_kernel(model, opts, opts.alpha);
  ARTest out;
  out.statistic = kernel.wald(tau0);
  out.p = std::isinf(out.statistic)
              ? 0.0
              : 1.0 - stats::chi2_cdf(out.statistic, static_cast<double>(kernel.pz));
  return out;
}

namespace {

// Closed-form inversion for a single instrument: W(tau) <= crit is the
// quadratic A tau^2 + B tau + C <= 0 once the (scalar) covariance polynomial
// is moved to the left side.
IntervalSet ar_set_closed_form(const ARKernel& k, std::vector<std::string>* notes) {
  const double gy = k.gy[0];
  const double gd = k.gd[0];
  const double szz_inv = k.ZtZ_inv(0, 0);
  double v_pp, v_pq, v_qq;
  if (k.flavor == VCovFlavor::classic) {
    v_pp = k.Mpp(0, 0) / k.df * szz_inv;
    v_pq = k.Mpq(0, 0) / k.df * szz_inv;
    v_qq = k.Mqq(0, 0) / k.df * szz_inv;
  } else {
    v_pp = k.factor * szz_inv * k.Mpp(0, 0) * szz_inv;
    v_pq = k.factor * szz_inv * k.Mpq(0, 0) * szz_inv;
    v_qq = k.factor * szz_inv * k.Mqq(0, 0) * szz_inv;
  }
  const double K = k.crit;
  const double A = gd * gd - K * v_qq;
  const double B = -2.0 * gy * gd + 2.0 * K * v_pq;
  const double C = gy * gy - K * v_pp;

  // Degeneracy is judged against the magnitudes of each coefficient's
  // ingredients, not against zero.
  const double a_scale = gd * gd + K * v_qq;
  const double b_scale = 2.0 * std::abs(gy * gd) + 2.0 * K * std::abs(v_pq);
  const double c_scale = gy * gy + K * v_pp;
  const bool a_deg = std::abs(A) <= 1e-10 * (a_scale + 1e-300);
  const bool b_deg = std::abs(B) <= 1e-10 * (b_scale + 1e-300);

  if (!a_deg) {
    const double disc = B * B - 4.0 * A * C;
    if (A > 0.0) {
      if (disc < 0.0) return IntervalSet::none();
      const double sq = std::sqrt(disc);
      const double qq = -0.5 * (B + std::copysign(sq, B == 0.0 ? 1.0 : B));
      double r1 = qq / A;
      double r2 = qq != 0.0 ? C / qq : -B / (2.0 * A);
      if (r1 > r2) std::swap(r1, r2);
      return IntervalSet::bounded(r1, r2);
    }
    // A < 0: the region is the complement of the open interval between roots.
    if (disc <= 0.0) return IntervalSet::whole_line();
    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (B + std::copysign(sq, B == 0.0 ? 1.0 : B));
    double r1 = qq / A;
    double r2 = qq != 0.0 ? C / qq : -B / (2.0 * A);
    if (r1 > r2) std::swap(r1, r2);
    return IntervalSet::from_intervals({{-kInf, r1}, {r2, kInf}});
  }
  if (!b_deg) {
    if (notes) notes->push_back("degenerate quadratic: acceptance region is a half line");
    const double edge = -C / B;
    return B > 0.0 ? IntervalSet::half_line_below(edge) : IntervalSet::half_line_above(edge);
  }
  const bool c_nonpos = C <= 1e-10 * (c_scale + 1e-300);
  return c_nonpos ? IntervalSet::whole_line() : IntervalSet::none();
}

struct TailStatus {
  bool defined = false;
  double w_limit = 0.0;
  bool accepted_left = false;
  bool accepted_right = false;
};

// As |tau| grows, W(tau) tends to the first-stage Wald statistic
// gd' Vd^{-1} gd with Vd the flavor covariance of the first stage.  When that
// limit is itself degenerate, fall back to evaluating far out on each side.
TailStatus tail_status(const ARKernel& k, double center, double halfwidth) {
  TailStatus t;
  Eigen::MatrixXd Vd;
  if (k.flavor == VCovFlavor::classic) {
    Vd = (k.Mqq(0, 0) / k.df) * k.ZtZ_inv;
  } else {
    Vd = k.factor * k.ZtZ_inv * k.Mqq * k.ZtZ_inv;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(Vd);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd x = ldlt.solve(k.gd);
    const double resid = (Vd * x - k.gd).cwiseAbs().maxCoeff();
    const double scale = k.gd.cwiseAbs().maxCoeff() + 1e-300;
    const double w = k.gd.dot(x);
    if (std::isfinite(w) && w >= 0 && resid <= 1e-8 * scale) {
      t.defined = true;
      t.w_limit = w;
      t.accepted_left = t.accepted_right = w <= k.crit;
      return t;
    }
  }
  const double far = std::max(halfwidth, 1.0) * 1e6;
  t.accepted_left = k.wald(center - far) <= k.crit;
  t.accepted_right = k.wald(center + far) <= k.crit;
  t.w_limit = std::nan("");
  return t;
}

IntervalSet ar_set_grid(const ARKernel& k, double center, double se_scale,
                        const ARSetOptions& set_opts, std::vector<std::string>* notes) {
  const int points = std::max(set_opts.grid_points, 101);
  double halfwidth = set_opts.span_se * se_scale;
  if (!(halfwidth > 0.0) || !std::isfinite(halfwidth)) halfwidth = 1.0;

  std::vector<char> accept(static_cast<std::size_t>(points));
  double lo = center - halfwidth, hi = center + halfwidth;
  TailStatus tails;
  bool consistent = false;
  for (int pass = 0; pass <= set_opts.max_expansions; ++pass) {
    lo = center - halfwidth;
    hi = center + halfwidth;
    const double step = (hi - lo) / static_cast<double>(points - 1);
    for (int i = 0; i < points; ++i) {
      accept[static_cast<std::size_t>(i)] =
          k.wald(lo + step * static_cast<double>(i)) <= k.crit ? 1 : 0;
    }
    tails = tail_status(k, center, halfwidth);
    const bool left_ok = (accept.front() != 0) == tails.accepted_left;
    const bool right_ok = (accept.back() != 0) == tails.accepted_right;
    if (left_ok && right_ok) {
      consistent = true;
      break;
    }
    halfwidth *= 2.0;
  }
  if (!consistent && notes) {
    notes->push_back("window expansion exhausted; tails classified by the limit statistic");
  }

  const double step = (hi - lo) / static_cast<double>(points - 1);
  std::vector<std::pair<double, double>> pieces;
  int run_start = -1;
  for (int i = 0; i <= points; ++i) {
    const bool on = i < points && accept[static_cast<std::size_t>(i)] != 0;
    if (on && run_start < 0) run_start = i;
    if (!on && run_start >= 0) {
      pieces.emplace_back(lo + step * run_start, lo + step * (i - 1));
      run_start = -1;
    }
  }
  if (!pieces.empty() && accept.front() != 0 && tails.accepted_left) {
    pieces.front().first = -kInf;
  }
  if (!pieces.empty() && accept.back() != 0 && tails.accepted_right) {
    pieces.back().second = kInf;
  }
  if (pieces.empty() && tails.accepted_left && tails.accepted_right) {
    // Acceptance lives entirely beyond the window on both sides.
    pieces.emplace_back(-kInf, lo);
    pieces.emplace_back(hi, kInf);
    if (notes) notes->push_back("acceptance region lies outside the scanned window");
  }
  return IntervalSet::from_intervals(std::move(pieces));
}

}  // namespace

InferenceResult ar_confidence_set(const IVModel& model, const FitOptions& opts,
                                  const ARSetOptions& set_opts) {
  const ARKernel kernel = make_kernel(model, opts, set_opts.alpha);

  InferenceResult res;
  res.method = "ar";
  res.alpha = set_opts.alpha;
  res.meta["crit"] = kernel.crit;
  res.meta["p_z"] = kernel.pz;

  double center = 0.0, se_scale = 0.0;
  bool have_point = false;
  try {
    const auto parts = tsls_parts(model);
    center = parts.tau;
    const double v = tsls_vcov_scalar(parts, kernel.flavor);
    se_scale = v > 0.0 ? std::sqrt(v) : 0.0;
    have_point = true;
  } catch (const NumericalError&) {
    // Degenerate first stage: the set is still well defined.  Scale the scan
    // window off the kernel's own coefficients.
    const double num = std::abs(kernel.gy[0]) + std::sqrt(std::abs(kernel.crit * kernel.Mpp(0, 0))) *
                                                    kernel.ZtZ_inv(0, 0);
    const double den = std::abs(kernel.gd[0]) + 1e-12;
    center = 0.0;
    se_scale = (num / den + 1.0) / set_opts.span_se;
  }
  res.point = have_point ? center : std::nan("");
  if (!have_point) res.notes.push_back("point estimate unavailable: degenerate first stage");

  const double w0 = kernel.wald(0.0);
  if (kernel.d_null) {
    // Constant statistic: accept everywhere or nowhere, decided at any point.
    res.ci = w0 <= kernel.crit ? IntervalSet::whole_line() : IntervalSet::none();
    res.notes.push_back(
        "treatment has no variation after partialling out; the statistic is constant");
    res.meta["path"] = (kernel.pz == 1 && !set_opts.force_grid) ? 0 : 1;
  } else if (kernel.pz == 1 && !set_opts.force_grid) {
    res.ci = ar_set_closed_form(kernel, &res.notes);
    res.meta["path"] = 0;  // closed form
  } else {
    res.ci = ar_set_grid(kernel, center, se_scale, set_opts, &res.notes);
    res.meta["path"] = 1;  // grid
  }

  res.p_null =
      std::isinf(w0) ? 0.0 : 1.0 - stats::chi2_cdf(w0, static_cast<double>(kernel.pz));
  res.meta["w_at_zero"] = w0;
  return res;
}

// ---------------------------------------------------------------------------
// adjusted t ratio

InferenceResult tf_adjust(double tau_hat, double se, double f_first, double alpha) {
  if (!(se > 0.0) || !std::isfinite(se)) {
    throw PreconditionError("tf_adjust: standard error must be positive and finite");
  }
  const TFLookup lookup = tf_lookup(f_first, alpha);
  InferenceResult res;
  res.method = "tf";
  res.point = tau_hat;
  res.alpha = alpha;
  res.meta["f_first"] = f_first;
  res.meta["se"] = se;
  if (lookup.below_support) {
    res.ci = IntervalSet::whole_line();
    res.p_null = 1.0;
    res.meta["below_support"] = 1;
    res.notes.push_back("first-stage F below the table floor; no finite critical value exists");
    return res;
  }
  const double crit = lookup.critical_value;
  res.ci = IntervalSet::bounded(tau_hat - crit * se, tau_hat + crit * se);
  // Report a p value whose alpha=0.05 decision matches the interval exactly.
  const double z = stats::norm_quantile(0.975);
  res.p_null = stats::two_sided_p(z * (tau_hat / se) / crit);
  res.meta["crit"] = crit;
  res.meta["factor"] = lookup.factor;
  res.meta["se_adjusted"] = lookup.factor * se;
  res.meta["below_support"] = 0;
  return res;
}

}  // namespace ivdiag
