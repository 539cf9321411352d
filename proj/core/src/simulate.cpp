#include "ivdiag/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ivdiag/errors.hpp"
#include "ivdiag/inference.hpp"
#include "ivdiag/iv.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/report.hpp"
#include "ivdiag/rng.hpp"
#include "ivdiag/strength.hpp"
#include "ivdiag/tf_table.hpp"

namespace ivdiag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One generated dataset from the joint-normal design.
IVModel generate(const SimSpec& spec, const Eigen::MatrixXd& chol, std::mt19937_64& engine) {
  const Eigen::Index n = spec.n;
  const Eigen::Index m = spec.p_z + 2;
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto draw = [&](Eigen::Ref<Eigen::VectorXd> out) {
    for (Eigen::Index j = 0; j < m; ++j) out[j] = normal(engine);
    out = chol * out;
  };

  Eigen::MatrixXd cluster_part;
  const int G = spec.cluster_count;
  if (G > 0) {
    cluster_part.resize(G, m);
    Eigen::VectorXd u(m);
    for (int g = 0; g < G; ++g) {
      draw(u);
      cluster_part.row(g) = u.transpose();
    }
  }
  const double wc = G > 0 ? std::sqrt(spec.within_corr) : 0.0;
  const double wu = G > 0 ? std::sqrt(1.0 - spec.within_corr) : 1.0;

  IVModel model;
  model.y.resize(n);
  model.d.resize(n);
  model.Z.resize(n, spec.p_z);
  model.covariates.resize(n, 0);
  model.add_intercept = true;
  if (G > 0) model.clusters.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < spec.p_z; ++j) {
    model.instrument_names.push_back("z" + std::to_string(j + 1));
  }

  Eigen::VectorXd x(m);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.p_z));
  for (Eigen::Index i = 0; i < n; ++i) {
    draw(x);
    if (G > 0) {
      const int g = static_cast<int>(i % G);
      x = wc * cluster_part.row(g).transpose() + wu * x;
      model.clusters.push_back(g);
    }
    model.Z.row(i) = x.head(spec.p_z).transpose();
    const double eps = x[spec.p_z];
    const double nu = x[spec.p_z + 1];
    const double d = spec.pi * model.Z.row(i).sum() * scale + nu;
    model.d[i] = d;
    model.y[i] = spec.tau_true * d + eps;
  }
  return model;
}

struct Slots {
  // Per-replication storage layout inside the result matrix.
  static constexpr int kTau2sls = 0;
  static constexpr int kTauOls = 1;
  static constexpr int kRho = 2;
  static constexpr int kSe2sls = 3;
  static constexpr int kOk = 4;
  static constexpr int kBase = 5;
  static int dim(const SimSpec& spec) {
    return kBase + 2 * static_cast<int>(spec.methods.size());
  }
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 3) return kNaN;
  const double ma = mean_of(a), mb = mean_of(b);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

SimSummary monte_carlo(const SimSpec& spec) {
  spec.validate();
  for (const Method m : spec.methods) {
    if (m == Method::tf) tf_lookup(100.0, spec.alpha);  // alpha support check up front
  }
  const Eigen::MatrixXd R = spec.correlation_matrix();
  const Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("sim: correlation matrix is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();

  const int dim = Slots::dim(spec);
  Eigen::MatrixXd results(spec.reps, dim);
  const double z_crit = stats::norm_quantile(1.0 - spec.alpha / 2.0);

  parallel_for(spec.reps, spec.threads, [&](std::int64_t rep) {
    auto engine = replicate_engine(spec.seed, streams::kSimulation, static_cast<std::uint64_t>(rep));
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Constant(dim, kNaN);
    row[Slots::kOk] = 0.0;
    try {
      const IVModel model = generate(spec, chol, engine);
      FitOptions opts;
      opts.flavor = spec.flavor;
      opts.alpha = spec.alpha;
      opts.threads = 1;
      opts.boot_reps = spec.bootstrap_reps;
      opts.seed = mix64(spec.seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(rep) + 1));

      const auto parts = tsls_parts(model);
      const double tau = parts.tau;
      const VCovFlavor se_flavor =
          spec.flavor == VCovFlavor::bootstrap
              ? (model.clusters.empty() ? VCovFlavor::hc1 : VCovFlavor::cr1)
              : spec.flavor;
      const double v = tsls_vcov_scalar(parts, se_flavor);
      const double se = v > 0.0 ? std::sqrt(v) : kNaN;
      row[Slots::kTau2sls] = tau;
      row[Slots::kSe2sls] = se;

      // Uninstrumented slope (intercept absorbed).
      const Eigen::VectorXd dc = model.d.array() - model.d.mean();
      const Eigen::VectorXd yc = model.y.array() - model.y.mean();
      const double dd = dc.squaredNorm();
      row[Slots::kTauOls] = dd > 0.0 ? dc.dot(yc) / dd : kNaN;

      row[Slots::kRho] = rho_d_dhat(parts.rm.d, parts.d_hat);
      row[Slots::kOk] = 1.0;

      FitOptions an = opts;
      an.flavor = se_flavor;
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        const int slot = Slots::kBase + 2 * static_cast<int>(mi);
        double reject_true = kNaN, reject_zero = kNaN;
        try {
          switch (spec.methods[mi]) {
            case Method::analytic: {
              if (std::isnan(se)) break;
              reject_true = std::abs((tau - spec.tau_true) / se) > z_crit ? 1.0 : 0.0;
              reject_zero = std::abs(tau / se) > z_crit ? 1.0 : 0.0;
              break;
            }
            case Method::ar: {
              reject_true = ar_test(model, spec.tau_true, an).p < spec.alpha ? 1.0 : 0.0;
              reject_zero = ar_test(model, 0.0, an).p < spec.alpha ? 1.0 : 0.0;
              break;
            }
            case Method::tf: {
              if (std::isnan(se)) break;
              auto [first, reduced] = component_fits(model, an);
              (void)reduced;
              const auto res = tf_adjust(tau, se, partial_f(first), spec.alpha);
              reject_true = res.ci.contains(spec.tau_true) ? 0.0 : 1.0;
              reject_zero = res.ci.contains(0.0) ? 0.0 : 1.0;
              break;
            }
            case Method::bootstrap_c:
            case Method::bootstrap_t: {
              const auto boot = bootstrap_infer(model, opts);
              const auto& res = spec.methods[mi] == Method::bootstrap_c ? boot.percentile
                                                                        : boot.studentized;
              reject_true = res.ci.contains(spec.tau_true) ? 0.0 : 1.0;
              reject_zero = res.ci.contains(0.0) ? 0.0 : 1.0;
              break;
            }
          }
        } catch (const NumericalError&) {
          // leave the slots NaN: the method failed on this draw
        }
        row[slot] = reject_true;
        row[slot + 1] = reject_zero;
      }
    } catch (const NumericalError&) {
      // whole replication dropped
    }
    results.row(rep) = row;
  });

  SimSummary s;
  s.reps_requested = spec.reps;
  std::vector<double> taus, olss, rhos, ratios_abs, log_ratios, rhos_for_slope;
  for (int rep = 0; rep < spec.reps; ++rep) {
    if (results(rep, Slots::kOk) != 1.0) {
      ++s.reps_failed;
      continue;
    }
    ++s.reps_done;
    const double tau = results(rep, Slots::kTau2sls);
    const double ols = results(rep, Slots::kTauOls);
    const double rho = results(rep, Slots::kRho);
    taus.push_back(tau);
    if (!std::isnan(ols)) olss.push_back(ols);
    if (!std::isnan(rho)) rhos.push_back(rho);
    if (!std::isnan(ols) && ols != 0.0 && !std::isnan(rho)) {
      const double ratio = std::abs(tau / ols);
      if (std::isfinite(ratio) && ratio > 0.0) {
        ratios_abs.push_back(ratio);
        log_ratios.push_back(std::log(ratio));
        rhos_for_slope.push_back(std::abs(rho));
      }
    }
  }
  if (taus.empty()) throw NumericalError("sim: every replication failed");

  std::vector<double> sorted_taus = taus;
  std::sort(sorted_taus.begin(), sorted_taus.end());
  std::vector<double> sorted_ols = olss;
  std::sort(sorted_ols.begin(), sorted_ols.end());

  s.mean_tau_2sls = mean_of(taus);
  s.median_tau_2sls = stats::quantile_sorted(sorted_taus, 0.5);
  s.mean_tau_ols = mean_of(olss);
  s.median_tau_ols = olss.empty() ? kNaN : stats::quantile_sorted(sorted_ols, 0.5);

  // Quantile-spacing standard error of the median.
  {
    const double dq = stats::quantile_sorted(sorted_taus, 0.55) -
                      stats::quantile_sorted(sorted_taus, 0.45);
    s.median_se_2sls = 5.0 * dq / std::sqrt(static_cast<double>(sorted_taus.size()));
  }

  const double sq_pz = std::sqrt(static_cast<double>(spec.p_z));
  const double var_d = spec.pi * spec.pi + 1.0;
  s.plim_tau_ols =
      spec.tau_true + (spec.pi * spec.rho_ze / sq_pz + spec.rho_de) / var_d;
  s.plim_tau_2sls =
      spec.pi != 0.0 ? spec.tau_true + spec.rho_ze / (spec.pi * sq_pz) : kNaN;
  s.concentration = static_cast<double>(spec.n) * spec.pi * spec.pi;
  s.pop_rho_d_dhat = std::abs(spec.pi) / std::sqrt(var_d);
  s.pop_rho_d_eps = (spec.pi * spec.rho_ze / sq_pz + spec.rho_de) / std::sqrt(var_d);
  s.pop_rho_z_eps = spec.rho_ze / sq_pz;

  s.bias_2sls = s.median_tau_2sls - spec.tau_true;
  s.bias_ols = s.median_tau_ols - spec.tau_true;
  s.bias_ratio_empirical =
      s.bias_ols != 0.0 ? std::abs(s.bias_2sls) / std::abs(s.bias_ols) : kNaN;
  const double denom = std::abs(s.pop_rho_d_eps) * s.pop_rho_d_dhat;
  s.bias_ratio_formula = denom > 0.0 ? std::abs(s.pop_rho_z_eps) / denom : kNaN;

  s.corr_absratio_rho = pearson(ratios_abs, rhos_for_slope);
  if (rhos_for_slope.size() >= 3) {
    Eigen::VectorXd yv(static_cast<Eigen::Index>(log_ratios.size()));
    Eigen::MatrixXd xv(static_cast<Eigen::Index>(log_ratios.size()), 1);
    for (std::size_t i = 0; i < log_ratios.size(); ++i) {
      yv[static_cast<Eigen::Index>(i)] = log_ratios[i];
      xv(static_cast<Eigen::Index>(i), 0) = rhos_for_slope[i];
    }
    FitOptions slope_opts;
    slope_opts.flavor = VCovFlavor::hc1;
    slope_opts.term_names = {"abs_rho"};
    try {
      const FitResult fit = ols_fit(yv, xv, slope_opts);
      s.slope_logratio_rho = fit.coef[1];
      s.slope_se = fit.se[1];
    } catch (const NumericalError&) {
      s.slope_logratio_rho = kNaN;
      s.slope_se = kNaN;
    }
  } else {
    s.slope_logratio_rho = kNaN;
    s.slope_se = kNaN;
  }

  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    MethodSimStats ms;
    ms.method = to_string(spec.methods[mi]);
    const int slot = Slots::kBase + 2 * static_cast<int>(mi);
    int hit_true = 0, hit_zero = 0;
    for (int rep = 0; rep < spec.reps; ++rep) {
      if (results(rep, Slots::kOk) != 1.0) continue;
      const double rt = results(rep, slot);
      const double rz = results(rep, slot + 1);
      if (!std::isnan(rt)) {
        ++ms.n_size;
        hit_true += rt == 1.0 ? 1 : 0;
      }
      if (!std::isnan(rz)) {
        ++ms.n_power;
        hit_zero += rz == 1.0 ? 1 : 0;
      }
    }
    ms.size = ms.n_size > 0 ? static_cast<double>(hit_true) / ms.n_size : kNaN;
    ms.power = ms.n_power > 0 ? static_cast<double>(hit_zero) / ms.n_power : kNaN;
    s.methods.push_back(std::move(ms));
  }
  return s;
}

nlohmann::ordered_json sim_to_json(const SimSpec& spec, const SimSummary& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = "ivdiag/sim/1";
  ordered_json sj;
  sj["n"] = static_cast<std::int64_t>(spec.n);
  sj["p_z"] = spec.p_z;
  sj["pi"] = spec.pi;
  sj["rho_de"] = spec.rho_de;
  sj["rho_ze"] = spec.rho_ze;
  if (spec.cluster_count > 0) {
    sj["clusters"] = ordered_json{{"count", spec.cluster_count},
                                  {"within_corr", spec.within_corr}};
  }
  sj["tau_true"] = spec.tau_true;
  sj["reps"] = spec.reps;
  sj["seed"] = spec.seed;
  sj["alpha"] = spec.alpha;
  sj["vcov"] = to_string(spec.flavor);
  ordered_json methods = ordered_json::array();
  for (Method m : spec.methods) methods.push_back(to_string(m));
  sj["methods"] = std::move(methods);
  j["spec"] = std::move(sj);

  j["reps_requested"] = s.reps_requested;
  j["reps_done"] = s.reps_done;
  j["reps_failed"] = s.reps_failed;
  j["mean_tau_2sls"] = json_number(s.mean_tau_2sls);
  j["median_tau_2sls"] = json_number(s.median_tau_2sls);
  j["mean_tau_ols"] = json_number(s.mean_tau_ols);
  j["median_tau_ols"] = json_number(s.median_tau_ols);
  j["median_se_2sls"] = json_number(s.median_se_2sls);
  j["plim_tau_ols"] = json_number(s.plim_tau_ols);
  j["plim_tau_2sls"] = json_number(s.plim_tau_2sls);
  j["concentration"] = json_number(s.concentration);
  j["pop_rho_d_dhat"] = json_number(s.pop_rho_d_dhat);
  j["pop_rho_d_eps"] = json_number(s.pop_rho_d_eps);
  j["pop_rho_z_eps"] = json_number(s.pop_rho_z_eps);
  j["bias_2sls"] = json_number(s.bias_2sls);
  j["bias_ols"] = json_number(s.bias_ols);
  j["bias_ratio_empirical"] = json_number(s.bias_ratio_empirical);
  j["bias_ratio_formula"] = json_number(s.bias_ratio_formula);
  j["corr_absratio_rho"] = json_number(s.corr_absratio_rho);
  j["slope_logratio_rho"] = json_number(s.slope_logratio_rho);
  j["slope_se"] = json_number(s.slope_se);
  ordered_json mj = ordered_json::array();
  for (const auto& m : s.methods) {
    mj.push_back(ordered_json{{"method", m.method},
                              {"size", json_number(m.size)},
                              {"power", json_number(m.power)},
                              {"n_size", m.n_size},
                              {"n_power", m.n_power}});
  }
  j["methods"] = std::move(mj);
  return j;
}

std::string sim_to_csv(const SimSpec& spec, const SimSummary& s) {
  std::ostringstream out;
  out << "metric,value\n";
  const auto row = [&](const std::string& k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << k << "," << (std::isnan(v) ? "" : buf) << "\n";
  };
  out << "n," << spec.n << "\nreps," << spec.reps << "\nseed," << spec.seed << "\n";
  row("pi", spec.pi);
  row("rho_de", spec.rho_de);
  row("rho_ze", spec.rho_ze);
  row("tau_true", spec.tau_true);
  out << "reps_done," << s.reps_done << "\nreps_failed," << s.reps_failed << "\n";
  row("mean_tau_2sls", s.mean_tau_2sls);
  row("median_tau_2sls", s.median_tau_2sls);
  row("mean_tau_ols", s.mean_tau_ols);
  row("median_tau_ols", s.median_tau_ols);
  row("median_se_2sls", s.median_se_2sls);
  row("plim_tau_ols", s.plim_tau_ols);
  row("plim_tau_2sls", s.plim_tau_2sls);
  row("concentration", s.concentration);
  row("bias_ratio_empirical", s.bias_ratio_empirical);
  row("bias_ratio_formula", s.bias_ratio_formula);
  row("corr_absratio_rho", s.corr_absratio_rho);
  row("slope_logratio_rho", s.slope_logratio_rho);
  row("slope_se", s.slope_se);
  for (const auto& m : s.methods) {
    row("size_" + m.method, m.size);
    row("power_" + m.method, m.power);
  }
  return out.str();
}

}  // namespace ivdiag
