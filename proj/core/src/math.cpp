#include "ivdiag/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace ivdiag::stats {

namespace {
const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
}

double norm_cdf(double x) { return boost::math::cdf(kStdNormal, x); }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
  return boost::math::quantile(kStdNormal, p);
}

double chi2_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::cdf(dist, x);
}

double chi2_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("chi2_quantile: p outside (0,1)");
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

double two_sided_p(double z) {
  if (std::isnan(z)) return std::nan("");
  return 2.0 * boost::math::cdf(boost::math::complement(kStdNormal, std::abs(z)));
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::domain_error("quantile_sorted: empty sample");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::domain_error("median: empty sample");
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

}  // namespace ivdiag::stats
