#pragma once

#include <cstddef>

namespace ivdiag {

// Looked-up adjustment for the t-ratio procedure keyed on the first-stage F.
struct TFLookup {
  double critical_value = 0.0;  // replaces 1.96 in the interval
  double factor = 0.0;          // critical_value / 1.96, multiplies the se
  bool below_support = false;   // F under the table floor: interval is unbounded
};

// Critical values are tabulated on a sqrt(F) grid; between knots the value is
// interpolated linearly in log F, and above the last knot it is exactly the
// unadjusted 1.96.  Below the first knot (F = 1.96^2) no finite critical
// value restores size control, so below_support is set instead.
//
// Only the 5% level is tabulated.  Other levels raise UnsupportedAlphaError.
TFLookup tf_lookup(double f_first, double alpha);

// Table access for validation: number of knots and (F, critical value) pairs.
std::size_t tf_table_size();
double tf_table_f(std::size_t i);
double tf_table_crit(std::size_t i);

}  // namespace ivdiag
