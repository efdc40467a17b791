#include "eqmix/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "eqmix/error.hpp"

namespace eqmix {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

std::uint64_t binomial_exact(int n, int k) {
  if (n < 0 || n > 60) throw ValidationError("binomial_exact: n must be in [0,60]");
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  // c * (n-k+i) / i stays integral at every step; the product fits in
  // 64 bits because C(60,30) * 60 < 2^64.
  for (int i = 1; i <= k; ++i) {
    c = c / static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n - k + i) +
        c % static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n - k + i) /
            static_cast<std::uint64_t>(i);
  }
  return c;
}

double log_binomial(int n, int k) {
  if (k < 0 || k > n || n < 0) return -std::numeric_limits<double>::infinity();
  if (n <= 60) return std::log(static_cast<double>(binomial_exact(n, k)));
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("fit_line: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("fit_line: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw ValidationError("fit_line: degenerate abscissae");
  LinearFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  const double dof = static_cast<double>(n - 2);
  fit.slope_stderr = std::sqrt(rss / dof / sxx);
  boost::math::students_t dist(dof);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  fit.slope_lo = fit.slope - t * fit.slope_stderr;
  fit.slope_hi = fit.slope + t * fit.slope_stderr;
  return fit;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace eqmix
