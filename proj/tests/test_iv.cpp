// Two-stage estimation: exact rational results on the integer fixture, the
// ratio identities that tie the instrumented slope to its component
// regressions, covariate absorption, weights, and the degenerate designs.
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ivdiag/dataset.hpp"
#include "ivdiag/errors.hpp"
#include "ivdiag/iv.hpp"
#include "oracles.hpp"

using namespace ivdiag;

namespace {

oracle::LVec to_lvec(const Eigen::VectorXd& v) {
  oracle::LVec out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

}  // namespace

TEST_CASE("six-row fixture matches the exact rational solution") {
  const auto m = testutil::fix_a();
  const std::vector<long long> z{0, 0, 0, 1, 1, 1};
  const std::vector<long long> d{1, 0, 1, 2, 1, 3};
  const std::vector<long long> y{2, 1, 2, 5, 3, 7};
  oracle::RationalSlopes rs;

  const oracle::Frac pi = rs.slope(z, d);
  const oracle::Frac gamma = rs.slope(z, y);
  const oracle::Frac tau = gamma / pi;
  const oracle::Frac tau_ols = rs.slope(d, y);
  CHECK(pi == oracle::Frac(4, 3));
  CHECK(gamma == oracle::Frac(10, 3));
  CHECK(tau == oracle::Frac(5, 2));
  CHECK(tau_ols == oracle::Frac(17, 8));

  const auto parts = tsls_parts(m);
  CHECK(parts.tau == doctest::Approx(tau.value()).epsilon(1e-14));
  CHECK(wald_ratio(m) == doctest::Approx(tau.value()).epsilon(1e-14));

  FitOptions opts;
  const auto [first, reduced] = component_fits(m, opts);
  CHECK(first.coef[0] == doctest::Approx(pi.value()).epsilon(1e-14));
  CHECK(reduced.coef[0] == doctest::Approx(gamma.value()).epsilon(1e-14));
  CHECK(first.terms == std::vector<std::string>{"z"});

  const auto disc = discrepancy(m, opts);
  CHECK(disc.tau_2sls == doctest::Approx(tau.value()).epsilon(1e-14));
  CHECK(disc.tau_ols == doctest::Approx(tau_ols.value()).epsilon(1e-14));
  CHECK(disc.ratio_abs ==
        doctest::Approx((tau / tau_ols).value()).epsilon(1e-13));  // 20/17
  CHECK(disc.same_sign);
  CHECK_FALSE(disc.ols_zero);
}

TEST_CASE("instrumented slope equals reduced form over first stage") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto m = testutil::random_model(seed);
    const auto ref = oracle::SimpleIV::from(to_lvec(m.Z.col(0)), to_lvec(m.d), to_lvec(m.y));

    const auto parts = tsls_parts(m);
    CHECK(parts.tau == doctest::Approx(static_cast<double>(ref.tau_2sls)).epsilon(1e-11));

    FitOptions opts;
    const auto [first, reduced] = component_fits(m, opts);
    CHECK(first.coef[0] == doctest::Approx(static_cast<double>(ref.pi_hat)).epsilon(1e-11));
    CHECK(reduced.coef[0] == doctest::Approx(static_cast<double>(ref.gamma_hat)).epsilon(1e-11));
    CHECK(reduced.coef[0] / first.coef[0] == doctest::Approx(parts.tau).epsilon(1e-11));
  }
}

TEST_CASE("difference in means for a binary instrument") {
  testutil::RandomModelOptions o;
  o.binary_z = true;
  o.n = 60;
  const auto m = testutil::random_model(9, o);

  long double y1 = 0, y0 = 0, d1 = 0, d0 = 0;
  long double n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < m.n(); ++i) {
    if (m.Z(i, 0) > 0.5) {
      y1 += m.y[i];
      d1 += m.d[i];
      n1 += 1;
    } else {
      y0 += m.y[i];
      d0 += m.d[i];
      n0 += 1;
    }
  }
  const long double direct = (y1 / n1 - y0 / n0) / (d1 / n1 - d0 / n0);
  CHECK(wald_ratio(m) == doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
  CHECK(tsls_parts(m).tau == doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
}

TEST_CASE("wald ratio preconditions") {
  testutil::RandomModelOptions o;
  o.p_x = 1;
  CHECK_THROWS_AS(wald_ratio(testutil::random_model(5, o)), PreconditionError);
  CHECK_THROWS_AS(wald_ratio(testutil::random_model(5)), PreconditionError);  // continuous z
}

TEST_CASE("covariates are absorbed exactly") {
  testutil::RandomModelOptions o;
  o.p_x = 2;
  o.n = 50;
  const auto m = testutil::random_model(17, o);

  // Reference: long-double OLS of y, d, z on [1, x1, x2], then the simple
  // ratio estimator on the residuals.
  const std::size_t n = 50;
  oracle::LMat C = oracle::lmat(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    C[i][0] = 1.0L;
    C[i][1] = m.covariates(static_cast<Eigen::Index>(i), 0);
    C[i][2] = m.covariates(static_cast<Eigen::Index>(i), 1);
  }
  const auto res_of = [&](const Eigen::VectorXd& v) {
    return oracle::OlsOracle::fit(C, to_lvec(v)).residuals;
  };
  const auto ref = oracle::SimpleIV::from(res_of(m.Z.col(0)), res_of(m.d), res_of(m.y));

  const auto parts = tsls_parts(m);
  CHECK(parts.tau == doctest::Approx(static_cast<double>(ref.tau_2sls)).epsilon(1e-10));
  CHECK(parts.rm.absorbed_rank == 3);
  CHECK(parts.k_total == 4);

  FitOptions opts;
  const auto fit = tsls_fit(m, opts);
  CHECK(fit.df_residual == 50 - 4);
  CHECK(fit.terms == std::vector<std::string>{"d"});
}

TEST_CASE("classic and hc1 variances match direct long-double formulas") {
  const auto m = testutil::random_model(23);
  const auto parts = tsls_parts(m);
  const std::size_t n = static_cast<std::size_t>(m.n());

  long double denom = 0, rss = 0, meat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dh = parts.d_hat[static_cast<Eigen::Index>(i)];
    const long double e = parts.residuals[static_cast<Eigen::Index>(i)];
    denom += dh * dh;
    rss += e * e;
    meat += e * e * dh * dh;
  }
  const long double k_total = static_cast<long double>(parts.k_total);
  const long double v_classic = (rss / (n - k_total)) / denom;
  const long double v_hc1 = (n / (n - k_total)) * meat / (denom * denom);

  CHECK(tsls_vcov_scalar(parts, VCovFlavor::classic) ==
        doctest::Approx(static_cast<double>(v_classic)).epsilon(1e-12));
  CHECK(tsls_vcov_scalar(parts, VCovFlavor::hc1) ==
        doctest::Approx(static_cast<double>(v_hc1)).epsilon(1e-12));
}

TEST_CASE("clustered variance equals the singleton limit on unclustered ids") {
  testutil::RandomModelOptions o;
  o.n = 36;
  auto m = testutil::random_model(29, o);
  m.clusters.resize(36);
  for (int i = 0; i < 36; ++i) m.clusters[static_cast<std::size_t>(i)] = i;
  const auto parts = tsls_parts(m);
  CHECK(tsls_vcov_scalar(parts, VCovFlavor::cr1) ==
        doctest::Approx(tsls_vcov_scalar(parts, VCovFlavor::hc1)).epsilon(1e-13));
}

TEST_CASE("integer weights replicate row duplication") {
  // A weight of 2 on a row must reproduce the point estimate from writing the
  // row twice.
  CsvTable t;
  t.header = {"y", "d", "z", "w"};
  t.rows = {{"2", "1", "0", "2"}, {"1", "0", "0", "1"}, {"2", "1", "0", "1"},
            {"5", "2", "1", "2"}, {"3", "1", "1", "1"}, {"7", "3", "1", "1"}};
  ColumnRoles roles;
  roles.outcome = "y";
  roles.treatment = "d";
  roles.instruments = {"z"};
  roles.weight = "w";
  const auto weighted = IVModel::from_dataset(dataset_from_table(t, roles));

  CsvTable t2;
  t2.header = {"y", "d", "z"};
  t2.rows = {{"2", "1", "0"}, {"2", "1", "0"}, {"1", "0", "0"}, {"2", "1", "0"},
             {"5", "2", "1"}, {"5", "2", "1"}, {"3", "1", "1"}, {"7", "3", "1"}};
  ColumnRoles roles2 = roles;
  roles2.weight.reset();
  const auto duplicated = IVModel::from_dataset(dataset_from_table(t2, roles2));

  CHECK(tsls_parts(weighted).tau ==
        doctest::Approx(tsls_parts(duplicated).tau).epsilon(1e-12));
  // Unit weights are a no-op.
  CsvTable t3 = t;
  for (auto& r : t3.rows) r[3] = "1";
  const auto unit = IVModel::from_dataset(dataset_from_table(t3, roles));
  CHECK(tsls_parts(unit).tau == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("using the treatment as its own instrument collapses to least squares") {
  auto m = testutil::random_model(37);
  m.Z.col(0) = m.d;
  FitOptions opts;
  const auto disc = discrepancy(m, opts);
  CHECK(disc.tau_2sls == doctest::Approx(disc.tau_ols).epsilon(1e-12));
  CHECK(disc.ratio_abs == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(disc.same_sign);
}

TEST_CASE("identity resample reproduces the fit bit for bit") {
  testutil::RandomModelOptions o;
  o.clusters = 5;
  const auto m = testutil::random_model(43, o);
  Resample identity;
  identity.rows.resize(static_cast<std::size_t>(m.n()));
  for (Eigen::Index i = 0; i < m.n(); ++i) identity.rows[static_cast<std::size_t>(i)] = i;
  identity.clusters = m.clusters;
  const auto copy = subset_model(m, identity);
  CHECK((copy.y.array() == m.y.array()).all());
  CHECK((copy.d.array() == m.d.array()).all());
  CHECK(copy.clusters == m.clusters);
  CHECK(tsls_parts(copy).tau == tsls_parts(m).tau);
}

TEST_CASE("bootstrap flavor of the two-stage fit is thread invariant") {
  const auto m = testutil::random_model(47);
  FitOptions opts;
  opts.flavor = VCovFlavor::bootstrap;
  opts.boot_reps = 150;
  opts.seed = 11;
  opts.threads = 1;
  const auto one = tsls_fit(m, opts);
  opts.threads = 4;
  const auto four = tsls_fit(m, opts);
  CHECK(one.vcov(0, 0) == four.vcov(0, 0));
  CHECK(one.boot_kept == four.boot_kept);
  CHECK(one.boot_dropped == four.boot_dropped);
}

TEST_CASE("degenerate designs are reported as such") {
  // Constant treatment: no first-stage variation left after the intercept.
  auto m = testutil::random_model(53);
  m.d.setOnes();
  CHECK_THROWS_AS(tsls_parts(m), DegenerateFirstStageError);

  // Instrument absorbed by a covariate: collinear after partialling out.
  testutil::RandomModelOptions o;
  o.p_x = 1;
  auto m2 = testutil::random_model(59, o);
  m2.Z.col(0) = m2.covariates.col(0);
  CHECK_THROWS_AS(tsls_parts(m2), CollinearityError);

  // Too few rows for the parameter count.
  auto m3 = testutil::fix_a();
  m3.y.conservativeResize(2);
  m3.d.conservativeResize(2);
  m3.Z.conservativeResize(2, 1);
  m3.covariates.conservativeResize(2, 0);
  CHECK_THROWS_AS(tsls_parts(m3), DegreesOfFreedomError);
}

TEST_CASE("model validation catches structural mismatches") {
  auto m = testutil::random_model(61);
  m.clusters = {0, 1};  // wrong length
  CHECK_THROWS_AS(m.validate(), ClusterCountError);

  auto m2 = testutil::random_model(61);
  m2.Z.resize(m2.n(), 0);
  CHECK_THROWS_AS(m2.validate(), PreconditionError);
}

TEST_CASE("two instruments: overidentified fit stays on the projection") {
  testutil::RandomModelOptions o;
  o.p_z = 2;
  o.n = 80;
  const auto m = testutil::random_model(67, o);
  const auto parts = tsls_parts(m);
  // d_hat is the projection of d on span(Z): residual orthogonal to both
  // instrument columns.
  const Eigen::VectorXd resid = parts.rm.d - parts.d_hat;
  CHECK(std::abs(resid.dot(parts.rm.Z.col(0))) < 1e-8);
  CHECK(std::abs(resid.dot(parts.rm.Z.col(1))) < 1e-8);
  // tau solves the moment condition in the projected direction.
  CHECK(parts.d_hat.dot(parts.rm.y - parts.tau * parts.rm.d) ==
        doctest::Approx(0.0).scale(std::abs(parts.d_hat.dot(parts.rm.y)) + 1.0).epsilon(1e-12));
}
