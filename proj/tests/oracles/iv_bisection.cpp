#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oracles.hpp"

namespace oracle {

double bs_call(double vol, double strike, double maturity) {
  if (vol <= 0.0 || maturity <= 0.0) return std::max(1.0 - strike, 0.0);
  const double s = vol * std::sqrt(maturity);
  const double d1 = (-std::log(strike) + 0.5 * s * s) / s;
  const double d2 = d1 - s;
  auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  return cdf(d1) - strike * cdf(d2);
}

double implied_vol_bisect(double call_price, double strike, double maturity) {
  double lo = 1e-9;
  double hi = 10.0;
  if (!(bs_call(lo, strike, maturity) < call_price && call_price < bs_call(hi, strike, maturity)))
    throw std::domain_error("bisection: price outside the bracket");
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (bs_call(mid, strike, maturity) < call_price)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
