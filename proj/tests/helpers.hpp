// Shared fixture builders for the test suite.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "ivdiag/iv.hpp"

namespace testutil {

// The six-row integer fixture used throughout: one binary instrument, no
// covariates.  Slopes are exact small rationals.
inline ivdiag::IVModel fix_a() {
  ivdiag::IVModel m;
  m.y.resize(6);
  m.d.resize(6);
  m.Z.resize(6, 1);
  m.covariates.resize(6, 0);
  m.add_intercept = true;
  m.instrument_names = {"z"};
  const double z[] = {0, 0, 0, 1, 1, 1};
  const double d[] = {1, 0, 1, 2, 1, 3};
  const double y[] = {2, 1, 2, 5, 3, 7};
  for (int i = 0; i < 6; ++i) {
    m.Z(i, 0) = z[i];
    m.d[i] = d[i];
    m.y[i] = y[i];
  }
  return m;
}

struct RandomModelOptions {
  Eigen::Index n = 40;
  int p_z = 1;
  int p_x = 0;          // covariates
  double pi = 1.0;
  double rho = 0.5;     // endogeneity
  bool binary_z = false;
  int clusters = 0;
};

inline ivdiag::IVModel random_model(std::uint64_t seed, const RandomModelOptions& o = {}) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  ivdiag::IVModel m;
  m.y.resize(o.n);
  m.d.resize(o.n);
  m.Z.resize(o.n, o.p_z);
  m.covariates.resize(o.n, o.p_x);
  m.add_intercept = true;
  for (int j = 0; j < o.p_z; ++j) m.instrument_names.push_back("z" + std::to_string(j + 1));
  for (int j = 0; j < o.p_x; ++j) m.covariate_names.push_back("x" + std::to_string(j + 1));
  if (o.clusters > 0) m.clusters.reserve(static_cast<std::size_t>(o.n));
  for (Eigen::Index i = 0; i < o.n; ++i) {
    double zsum = 0.0;
    for (int j = 0; j < o.p_z; ++j) {
      const double z = o.binary_z ? (coin(engine) ? 1.0 : 0.0) : normal(engine);
      m.Z(i, j) = z;
      zsum += z;
    }
    double xsum = 0.0;
    for (int j = 0; j < o.p_x; ++j) {
      const double x = normal(engine);
      m.covariates(i, j) = x;
      xsum += x;
    }
    const double nu = normal(engine);
    const double eps = o.rho * nu + std::sqrt(1.0 - o.rho * o.rho) * normal(engine);
    m.d[i] = o.pi * zsum + 0.4 * xsum + nu;
    m.y[i] = 1.5 * m.d[i] + 0.7 * xsum + eps;
    if (o.clusters > 0) m.clusters.push_back(static_cast<int>(i % o.clusters));
  }
  return m;
}

}  // namespace testutil
