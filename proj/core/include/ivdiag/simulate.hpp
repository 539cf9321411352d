#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ivdiag/config.hpp"

namespace ivdiag {

struct MethodSimStats {
  std::string method;
  double size = 0.0;   // rejection rate of the true coefficient
  double power = 0.0;  // rejection rate of zero
  int n_size = 0;
  int n_power = 0;
};

struct SimSummary {
  int reps_requested = 0;
  int reps_done = 0;
  int reps_failed = 0;

  double mean_tau_2sls = 0.0;
  double median_tau_2sls = 0.0;
  double mean_tau_ols = 0.0;
  double median_tau_ols = 0.0;
  double median_se_2sls = 0.0;  // MC standard error of the 2SLS median

  // Population counterparts implied by the design.
  double plim_tau_ols = 0.0;
  double plim_tau_2sls = 0.0;  // NaN when the first stage is zero
  double concentration = 0.0;  // n * pi^2
  double pop_rho_d_dhat = 0.0;
  double pop_rho_d_eps = 0.0;
  double pop_rho_z_eps = 0.0;

  // Median-based empirical bias and the population amplification identity.
  double bias_2sls = 0.0;  // median(tau_hat) - tau_true
  double bias_ols = 0.0;
  double bias_ratio_empirical = 0.0;
  double bias_ratio_formula = 0.0;

  // Cross-replication association of the estimate discrepancy with the
  // first-stage fit quality.
  double corr_absratio_rho = 0.0;
  double slope_logratio_rho = 0.0;
  double slope_se = 0.0;

  std::vector<MethodSimStats> methods;
};

SimSummary monte_carlo(const SimSpec& spec);

nlohmann::ordered_json sim_to_json(const SimSpec& spec, const SimSummary& summary);
std::string sim_to_csv(const SimSpec& spec, const SimSummary& summary);

}  // namespace ivdiag
