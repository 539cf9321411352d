#pragma once

#include <cstddef>
#include <vector>

namespace ivdiag::stats {

double norm_cdf(double x);
double norm_quantile(double p);  // p in (0, 1)
double chi2_cdf(double x, double df);
double chi2_quantile(double p, double df);  // p in (0, 1)

// Two-sided normal-reference p value for a standardized statistic.
double two_sided_p(double z);

// Empirical quantile with linear interpolation between order statistics
// (the common "type 7" definition).  `sorted` must be ascending and nonempty.
double quantile_sorted(const std::vector<double>& sorted, double p);

double median(std::vector<double> values);  // takes a copy, reorders it

}  // namespace ivdiag::stats
