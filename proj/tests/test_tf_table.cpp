// Critical-value table for the adjusted t-ratio: shape, frozen entries,
// interpolation behavior, and the support boundaries.
#include <doctest.h>

#include <cmath>

#include "ivdiag/errors.hpp"
#include "ivdiag/tf_table.hpp"

using namespace ivdiag;

TEST_CASE("table shape and endpoints") {
  REQUIRE(tf_table_size() == 85);
  // sqrt(F) grid from 1.96 to 10.36 in steps of 0.1.
  CHECK(tf_table_f(0) == doctest::Approx(1.96 * 1.96).epsilon(1e-14));
  CHECK(tf_table_f(84) == doctest::Approx(10.36 * 10.36).epsilon(1e-14));
  for (std::size_t i = 0; i + 1 < 85; ++i) {
    CHECK(std::sqrt(tf_table_f(i + 1)) - std::sqrt(tf_table_f(i)) ==
          doctest::Approx(0.1).epsilon(1e-10));
  }
  CHECK(tf_table_crit(0) == 18.66);
  CHECK(tf_table_crit(84) == 1.96);
}

TEST_CASE("critical values decrease toward the unadjusted threshold") {
  for (std::size_t i = 0; i + 1 < tf_table_size(); ++i) {
    CHECK(tf_table_crit(i) >= tf_table_crit(i + 1));
  }
  for (std::size_t i = 0; i < tf_table_size(); ++i) {
    CHECK(tf_table_crit(i) >= 1.96);
    CHECK(tf_table_crit(i) <= 18.66);
  }
}

TEST_CASE("a handful of frozen interior entries") {
  CHECK(tf_table_crit(1) == 9.74);
  CHECK(tf_table_crit(2) == 7.37);
  CHECK(tf_table_crit(9) == 3.82);   // sqrt(F) = 2.86
  CHECK(tf_table_crit(40) == 2.27);  // sqrt(F) = 5.96
  CHECK(tf_table_crit(80) == 1.97);
}

TEST_CASE("lookup hits knots exactly and interpolates in log F between them") {
  for (std::size_t i : {std::size_t{0}, std::size_t{5}, std::size_t{40}, std::size_t{83}}) {
    const auto hit = tf_lookup(tf_table_f(i), 0.05);
    CHECK_FALSE(hit.below_support);
    CHECK(hit.critical_value == doctest::Approx(tf_table_crit(i)).epsilon(1e-12));
    CHECK(hit.factor == doctest::Approx(tf_table_crit(i) / 1.96).epsilon(1e-12));
  }

  // Midpoint in log F between knots 1 and 2.
  const double f_mid = std::sqrt(tf_table_f(1) * tf_table_f(2));
  const auto mid = tf_lookup(f_mid, 0.05);
  const double expected = 0.5 * (tf_table_crit(1) + tf_table_crit(2));
  CHECK(mid.critical_value == doctest::Approx(expected).epsilon(1e-12));

  // Interpolated values are bracketed by the knots and monotone in F.
  double prev = 1e9;
  for (double f = 3.8416; f < 107.0; f *= 1.03) {
    const auto lk = tf_lookup(f, 0.05);
    CHECK(lk.critical_value <= prev + 1e-12);
    CHECK(lk.critical_value >= 1.96);
    CHECK(lk.critical_value <= 18.66);
    prev = lk.critical_value;
  }
}

TEST_CASE("support boundaries") {
  const auto below = tf_lookup(3.84, 0.05);
  CHECK(below.below_support);

  const auto above = tf_lookup(200.0, 0.05);
  CHECK_FALSE(above.below_support);
  CHECK(above.critical_value == 1.96);
  CHECK(above.factor == 1.0);

  // Past F ~ 104.7 the table is within a fifth of a percent of the baseline.
  const auto near_top = tf_lookup(104.7, 0.05);
  CHECK(near_top.critical_value <= 1.96 * 1.002);
  CHECK(near_top.critical_value >= 1.96);
}

TEST_CASE("only the tabulated level is served") {
  CHECK_THROWS_AS(tf_lookup(10.0, 0.01), UnsupportedAlphaError);
  CHECK_THROWS_AS(tf_lookup(10.0, 0.10), UnsupportedAlphaError);
  CHECK_THROWS_AS(tf_lookup(-1.0, 0.05), PreconditionError);
  CHECK_THROWS_AS(tf_lookup(0.0, 0.05), PreconditionError);
}
