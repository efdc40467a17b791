#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eqmix {

// log(sum_i exp(v_i)) with max extraction. Empty input gives -inf.
double log_sum_exp(std::span<const double> values);

// log(exp(a) + exp(b))
double log_add_exp(double a, double b);

// log C(n, k); exact integer arithmetic for n <= 60, log-gamma above.
// Returns -inf when k < 0 or k > n.
double log_binomial(int n, int k);

// Exact C(n, k) for n <= 60.
std::uint64_t binomial_exact(int n, int k);

// Ordinary least squares y = intercept + slope * x with a two-sided 95%
// interval on the slope (Student t with n-2 degrees of freedom).
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

// printf-style "%.17g"; every number written to disk goes through this.
std::string format_real(double v);

}  // namespace eqmix
