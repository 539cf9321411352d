// Least-squares engine: coefficients and every covariance flavor against an
// independent long-double implementation, degrees-of-freedom accounting,
// partialling-out identities, and bootstrap determinism.
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ivdiag/errors.hpp"
#include "ivdiag/math.hpp"
#include "ivdiag/regression.hpp"
#include "oracles.hpp"

using namespace ivdiag;

namespace {

struct RandomDesign {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // slope columns only
  std::vector<int> clusters;
  oracle::LMat Xo;    // with intercept column, long double
  oracle::LVec yo;
};

RandomDesign make_design(std::uint64_t seed, Eigen::Index n, int p, int n_clusters) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  RandomDesign d;
  d.y.resize(n);
  d.X.resize(n, p);
  d.Xo = oracle::lmat(static_cast<std::size_t>(n), static_cast<std::size_t>(p) + 1);
  d.yo.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d.Xo[static_cast<std::size_t>(i)][0] = 1.0L;
    double lin = 0.0;
    for (int j = 0; j < p; ++j) {
      const double x = normal(rng);
      d.X(i, j) = x;
      d.Xo[static_cast<std::size_t>(i)][static_cast<std::size_t>(j) + 1] = x;
      lin += (j + 1) * 0.5 * x;
    }
    // Scale noise with the first column so the robust flavors differ from the
    // classic one in a detectable way.
    const double scale = 1.0 + 0.5 * std::abs(d.X(i, 0));
    d.y[i] = 0.3 + lin + scale * normal(rng);
    d.yo[static_cast<std::size_t>(i)] = d.y[i];
    if (n_clusters > 0) d.clusters.push_back(static_cast<int>(i % n_clusters));
  }
  return d;
}

double max_abs_diff(const Eigen::MatrixXd& a, const oracle::LMat& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - static_cast<double>(
                                                     b[static_cast<std::size_t>(i)]
                                                      [static_cast<std::size_t>(j)])));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("coefficients and classic covariance match the reference solver") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto d = make_design(seed, 60, 3, 0);
    const auto fit = ols_fit(d.y, d.X, {});
    const auto ref = oracle::OlsOracle::fit(d.Xo, d.yo);

    REQUIRE(fit.coef.size() == 4);
    for (int j = 0; j < 4; ++j) {
      CHECK(fit.coef[j] == doctest::Approx(static_cast<double>(ref.coef[static_cast<std::size_t>(j)]))
                               .epsilon(1e-10));
    }
    CHECK(fit.sigma2_hat == doctest::Approx(static_cast<double>(ref.sigma2)).epsilon(1e-10));
    CHECK(fit.df_residual == 56);
    CHECK(max_abs_diff(fit.vcov, ref.vcov_classic()) < 1e-12);
  }
}

TEST_CASE("hc1 covariance matches the textbook sandwich sums") {
  const auto d = make_design(21, 80, 2, 0);
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  const auto fit = ols_fit(d.y, d.X, opts);
  const auto ref = oracle::OlsOracle::fit(d.Xo, d.yo);
  CHECK(max_abs_diff(fit.vcov, ref.vcov_hc1(d.Xo)) < 1e-12);
  // Heteroskedastic noise: the robust variance of the first slope should not
  // coincide with the classic one.
  const auto classic = ols_fit(d.y, d.X, {});
  CHECK(std::abs(fit.vcov(1, 1) - classic.vcov(1, 1)) > 1e-6);
}

TEST_CASE("cr1 covariance matches the textbook cluster sums") {
  const auto d = make_design(31, 90, 2, 9);
  FitOptions opts;
  opts.flavor = VCovFlavor::cr1;
  opts.clusters = &d.clusters;
  const auto fit = ols_fit(d.y, d.X, opts);
  const auto ref = oracle::OlsOracle::fit(d.Xo, d.yo);
  CHECK(max_abs_diff(fit.vcov, ref.vcov_cr1(d.Xo, d.clusters)) < 1e-12);
}

TEST_CASE("every-row-its-own-cluster reproduces hc1 exactly") {
  // With G = n the cluster meat collapses to the heteroskedastic meat and the
  // small-sample factors agree: G/(G-1) * (n-1)/(n-k) = n/(n-k).
  const auto d = make_design(41, 50, 2, 0);
  std::vector<int> singletons(50);
  for (int i = 0; i < 50; ++i) singletons[static_cast<std::size_t>(i)] = i;

  FitOptions hc;
  hc.flavor = VCovFlavor::hc1;
  FitOptions cr;
  cr.flavor = VCovFlavor::cr1;
  cr.clusters = &singletons;

  const auto fit_hc = ols_fit(d.y, d.X, hc);
  const auto fit_cr = ols_fit(d.y, d.X, cr);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(fit_cr.vcov(i, j) == doctest::Approx(fit_hc.vcov(i, j)).epsilon(1e-13));
    }
  }
  CHECK(fit_cr.se[1] / fit_hc.se[1] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("summary columns are consistent with the covariance matrix") {
  const auto d = make_design(51, 45, 2, 0);
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  opts.alpha = 0.10;
  const auto fit = ols_fit(d.y, d.X, opts);
  const double z = stats::norm_quantile(0.95);
  for (Eigen::Index j = 0; j < fit.k(); ++j) {
    CHECK(fit.se[j] == doctest::Approx(std::sqrt(fit.vcov(j, j))).epsilon(1e-14));
    CHECK(fit.tstat[j] == doctest::Approx(fit.coef[j] / fit.se[j]).epsilon(1e-14));
    CHECK(fit.pvalue[j] == doctest::Approx(stats::two_sided_p(fit.tstat[j])).epsilon(1e-14));
    CHECK(fit.ci_low[j] == doctest::Approx(fit.coef[j] - z * fit.se[j]).epsilon(1e-13));
    CHECK(fit.ci_high[j] == doctest::Approx(fit.coef[j] + z * fit.se[j]).epsilon(1e-13));
  }
  CHECK(fit.alpha == 0.10);
  CHECK(fit.terms.front() == "(intercept)");
}

TEST_CASE("rank-deficient designs name the dependent columns") {
  Eigen::VectorXd y = Eigen::VectorXd::Random(20);
  Eigen::MatrixXd X(20, 3);
  X.col(0) = Eigen::VectorXd::Random(20);
  X.col(1) = Eigen::VectorXd::Random(20);
  X.col(2) = 2.0 * X.col(0) - X.col(1);
  FitOptions opts;
  opts.term_names = {"a", "b", "c"};
  try {
    ols_fit(y, X, opts);
    FAIL("expected CollinearityError");
  } catch (const CollinearityError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("rank deficient") != std::string::npos);
    // The dependent set is {a, b, c} up to pivoting; at least one must appear.
    const bool named = msg.find("a") != std::string::npos || msg.find("b") != std::string::npos ||
                       msg.find("c") != std::string::npos;
    CHECK(named);
  }
}

TEST_CASE("parameter counts at or above the row count are refused") {
  Eigen::VectorXd y = Eigen::VectorXd::Random(4);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 3);  // + intercept = 4 params
  CHECK_THROWS_AS(ols_fit(y, X, {}), DegreesOfFreedomError);

  // absorbed_rank participates in the same budget.
  Eigen::VectorXd y2 = Eigen::VectorXd::Random(6);
  Eigen::MatrixXd X2 = Eigen::MatrixXd::Random(6, 3);
  FitOptions opts;
  opts.absorbed_rank = 2;  // 4 + 2 >= 6
  CHECK_THROWS_AS(ols_fit(y2, X2, opts), DegreesOfFreedomError);
}

TEST_CASE("absorbed regressors scale the classic and hc1 corrections") {
  const auto d = make_design(61, 40, 2, 0);
  FitOptions plain;
  FitOptions absorbed;
  absorbed.absorbed_rank = 5;

  const auto f0 = ols_fit(d.y, d.X, plain);
  const auto f5 = ols_fit(d.y, d.X, absorbed);
  const double n = 40, k = 3;
  CHECK(f5.df_residual == 40 - 3 - 5);
  CHECK(f5.sigma2_hat / f0.sigma2_hat == doctest::Approx((n - k) / (n - k - 5)).epsilon(1e-13));
  CHECK(f5.vcov(1, 1) / f0.vcov(1, 1) == doctest::Approx((n - k) / (n - k - 5)).epsilon(1e-13));

  plain.flavor = VCovFlavor::hc1;
  absorbed.flavor = VCovFlavor::hc1;
  const auto h0 = ols_fit(d.y, d.X, plain);
  const auto h5 = ols_fit(d.y, d.X, absorbed);
  CHECK(h5.vcov(1, 1) / h0.vcov(1, 1) == doctest::Approx((n - k) / (n - k - 5)).epsilon(1e-13));
}

TEST_CASE("cr1 without usable cluster ids is refused") {
  const auto d = make_design(71, 30, 2, 0);
  FitOptions opts;
  opts.flavor = VCovFlavor::cr1;
  CHECK_THROWS_AS(ols_fit(d.y, d.X, opts), ClusterCountError);

  std::vector<int> one_cluster(30, 0);
  opts.clusters = &one_cluster;
  CHECK_THROWS_AS(ols_fit(d.y, d.X, opts), ClusterCountError);
}

TEST_CASE("basic argument validation") {
  Eigen::VectorXd y = Eigen::VectorXd::Random(10);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(12, 2);
  CHECK_THROWS_AS(ols_fit(y, X, {}), PreconditionError);

  Eigen::MatrixXd X2 = Eigen::MatrixXd::Random(10, 2);
  FitOptions bad_alpha;
  bad_alpha.alpha = 1.5;
  CHECK_THROWS_AS(ols_fit(y, X2, bad_alpha), ConfigError);

  FitOptions boot;
  boot.flavor = VCovFlavor::bootstrap;
  boot.boot_reps = 1;
  CHECK_THROWS_AS(ols_fit(y, X2, boot), ConfigError);
}

TEST_CASE("flavor names round trip") {
  for (auto f : {VCovFlavor::classic, VCovFlavor::hc1, VCovFlavor::cr1, VCovFlavor::bootstrap}) {
    CHECK(vcov_flavor_from_string(to_string(f)) == f);
  }
  CHECK_THROWS_AS(vcov_flavor_from_string("hc3"), ConfigError);
}

TEST_CASE("residualizing removes every control direction") {
  const auto d = make_design(81, 50, 3, 0);
  Eigen::MatrixXd targets(50, 2);
  targets.col(0) = d.y;
  targets.col(1) = d.X.col(0);
  Eigen::MatrixXd controls = d.X.rightCols(2);

  const Eigen::MatrixXd res = residualize_on(targets, controls);
  REQUIRE(res.rows() == 50);
  REQUIRE(res.cols() == 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    CHECK(std::abs(res.col(c).sum()) < 1e-9);  // intercept direction
    for (Eigen::Index j = 0; j < 2; ++j) {
      CHECK(std::abs(res.col(c).dot(controls.col(j))) < 1e-8);
    }
  }
  // Idempotent: residualizing the residuals changes nothing.
  const Eigen::MatrixXd twice = residualize_on(res, controls);
  CHECK((twice - res).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("partialled-out regression reproduces the joint slope") {
  const auto d = make_design(91, 64, 3, 0);
  const auto joint = ols_fit(d.y, d.X, {});

  Eigen::MatrixXd targets(64, 2);
  targets.col(0) = d.y;
  targets.col(1) = d.X.col(0);
  const Eigen::MatrixXd controls = d.X.rightCols(2);
  const Eigen::MatrixXd res = residualize_on(targets, controls);

  FitOptions opts;
  opts.add_intercept = false;
  opts.absorbed_rank = 3;  // intercept + two controls
  const Eigen::VectorXd y_res = res.col(0);
  const Eigen::MatrixXd x_res = res.col(1);
  const auto partial = ols_fit(y_res, x_res, opts);

  CHECK(partial.coef[0] == doctest::Approx(joint.coef[1]).epsilon(1e-10));
  // Same residual df, so the classic standard errors agree too.
  CHECK(partial.df_residual == joint.df_residual);
  CHECK(partial.se[0] == doctest::Approx(joint.se[1]).epsilon(1e-8));
}

TEST_CASE("residualize_on rejects impossible control counts") {
  Eigen::MatrixXd t = Eigen::MatrixXd::Random(3, 1);
  Eigen::MatrixXd c = Eigen::MatrixXd::Random(3, 5);
  CHECK_THROWS_AS(residualize_on(t, c), DegreesOfFreedomError);
  Eigen::MatrixXd c2 = Eigen::MatrixXd::Random(4, 1);
  CHECK_THROWS_AS(residualize_on(t, c2), PreconditionError);
}

TEST_CASE("bootstrap covariance is identical across thread counts") {
  const auto d = make_design(101, 48, 2, 6);
  FitOptions base;
  base.flavor = VCovFlavor::bootstrap;
  base.boot_reps = 200;
  base.seed = 7;

  base.threads = 1;
  const auto one = ols_fit(d.y, d.X, base);
  base.threads = 4;
  const auto four = ols_fit(d.y, d.X, base);
  CHECK(one.boot_kept == four.boot_kept);
  CHECK((one.vcov - four.vcov).cwiseAbs().maxCoeff() == 0.0);
  CHECK((one.coef.array() == four.coef.array()).all());

  // Clustered resampling: same property.
  base.clusters = &d.clusters;
  base.threads = 1;
  const auto cone = ols_fit(d.y, d.X, base);
  base.threads = 3;
  const auto cthree = ols_fit(d.y, d.X, base);
  CHECK((cone.vcov - cthree.vcov).cwiseAbs().maxCoeff() == 0.0);

  // And the clustered run really differs from the row run.
  CHECK(std::abs(cone.vcov(1, 1) - one.vcov(1, 1)) > 0.0);
}

TEST_CASE("bootstrap covariance approaches hc1 on a well-behaved design") {
  const auto d = make_design(111, 200, 1, 0);
  FitOptions hc;
  hc.flavor = VCovFlavor::hc1;
  const auto fit_hc = ols_fit(d.y, d.X, hc);

  FitOptions boot;
  boot.flavor = VCovFlavor::bootstrap;
  boot.boot_reps = 2000;
  boot.seed = 3;
  boot.threads = 2;
  const auto fit_boot = ols_fit(d.y, d.X, boot);
  CHECK(fit_boot.boot_dropped == 0);
  CHECK(fit_boot.se[1] == doctest::Approx(fit_hc.se[1]).epsilon(0.15));
}
