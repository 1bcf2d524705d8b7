#include "hxai/black_scholes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hxai/errors.hpp"

namespace hxai::heston {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidParameter(std::string(what) + " must be finite");
}

// exp(t^2) erfc(t) for t >= 0.
double erfcx(double t) {
  if (t < 26.0) return std::exp(t * t) * std::erfc(t);
  // Continued fraction erfc(t) = exp(-t^2)/sqrt(pi) / (t + (1/2)/(t + 1/(t + (3/2)/(t + ...)))).
  double tail = t;
  for (int n = 60; n >= 1; --n) tail = t + 0.5 * n / tail;
  return 1.0 / (std::sqrt(std::numbers::pi) * tail);
}

// Mills ratio N(-z)/phi(z).
double mills(double z) { return std::sqrt(std::numbers::pi / 2.0) * erfcx(z / std::numbers::sqrt2); }

double log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

// log(N(d1) - e^y N(d2)) for y >= 0, total volatility s > 0.
double log_otm_call(double y, double s) {
  const double d1 = -y / s + 0.5 * s;
  const double d2 = d1 - s;
  if (d1 < -1.0) {
    // N(d) = phi(d) M(-d) and phi(d2) = phi(d1) e^{-y}, so the price is
    // phi(d1) (M(-d1) - M(-d2)) with no cancellation between tiny terms.
    const double diff = mills(-d1) - mills(-d2);
    if (!(diff > 0.0)) return -kInf;
    return log_pdf(d1) + std::log(diff);
  }
  const double c = norm_cdf(d1) - std::exp(y) * norm_cdf(d2);
  return c > 0.0 ? std::log(c) : -kInf;
}

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

PriceQuote PriceQuote::from_call(double call_price, double strike) {
  require_finite(call_price, "call price");
  require_finite(strike, "strike");
  if (!(strike > 0.0)) throw InvalidParameter("strike must be positive");
  const double intrinsic = strike < 1.0 ? 1.0 - strike : 0.0;
  const double tv = call_price - intrinsic;
  return PriceQuote(strike, tv > 0.0 ? std::log(tv) : -kInf);
}

PriceQuote PriceQuote::from_log_time_value(double log_time_value, double strike) {
  require_finite(strike, "strike");
  if (!(strike > 0.0)) throw InvalidParameter("strike must be positive");
  if (std::isnan(log_time_value)) throw InvalidParameter("log time value is NaN");
  return PriceQuote(strike, log_time_value);
}

double PriceQuote::time_value() const { return std::exp(log_time_value_); }
double PriceQuote::call() const { return intrinsic() + time_value(); }
double PriceQuote::put() const { return (strike_ > 1.0 ? strike_ - 1.0 : 0.0) + time_value(); }

bool PriceQuote::strictly_inside_bounds() const {
  return std::isfinite(log_time_value_) && log_time_value_ < std::log(max_time_value());
}

double log_bs_time_value(double vol, double strike, double maturity) {
  require_finite(vol, "volatility");
  require_finite(strike, "strike");
  require_finite(maturity, "maturity");
  if (vol < 0.0 || !(strike > 0.0) || !(maturity > 0.0))
    throw InvalidParameter("Black-Scholes needs vol >= 0, K > 0, T > 0");
  const double s = vol * std::sqrt(maturity);
  if (s == 0.0) return -kInf;
  const double x = std::log(strike);
  if (x >= 0.0) return log_otm_call(x, s);
  // put(x, s) = e^x call(-x, s)
  return x + log_otm_call(-x, s);
}

PriceQuote bs_price(double vol, double strike, double maturity) {
  return PriceQuote::from_log_time_value(log_bs_time_value(vol, strike, maturity), strike);
}

double bs_call(double vol, double strike, double maturity) {
  return bs_price(vol, strike, maturity).call();
}

double bs_vega(double vol, double strike, double maturity) {
  if (!(vol > 0.0)) return 0.0;
  const double s = vol * std::sqrt(maturity);
  const double d1 = -std::log(strike) / s + 0.5 * s;
  return std::exp(log_pdf(d1)) * std::sqrt(maturity);
}

double implied_vol(const PriceQuote& price, double maturity) {
  require_finite(maturity, "maturity");
  if (!(maturity > 0.0)) throw InvalidParameter("maturity must be positive");
  const double strike = price.strike();
  if (!price.strictly_inside_bounds())
    throw NoSolution("price on or outside no-arbitrage bounds (K=" + std::to_string(strike) +
                     ", T=" + std::to_string(maturity) + ")");

  const double target = price.log_time_value();
  const double sqrt_t = std::sqrt(maturity);
  const double x = std::log(strike);
  auto excess = [&](double vol) { return log_bs_time_value(vol, strike, maturity) - target; };

  double lo = 1e-6;
  double hi = 5.0;
  while (excess(lo) > 0.0 && lo > 1e-12) lo *= 0.1;
  while (excess(hi) < 0.0 && hi < 1e4) hi *= 2.0;
  if (excess(lo) > 0.0 || excess(hi) < 0.0)
    throw NumericalFailure("implied vol could not be bracketed (K=" + std::to_string(strike) +
                           ", T=" + std::to_string(maturity) + ")");

  double vol = 0.5 * (lo + hi);
  for (int iter = 0; iter < 300; ++iter) {
    const double g = excess(vol);
    if (g == 0.0) return vol;
    if (g > 0.0)
      hi = vol;
    else
      lo = vol;
    // d/dvol log(price) = vega / price, evaluated in log space.
    const double s = vol * sqrt_t;
    const double d1 = -x / s + 0.5 * s;
    const double slope = std::exp(log_pdf(d1) + 0.5 * std::log(maturity) - (g + target));
    double next = vol - g / slope;
    if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
    if (std::abs(next - vol) <= 2e-16 * vol || hi - lo <= 4e-16 * hi) return next;
    vol = next;
  }
  throw NumericalFailure("implied vol solver did not converge (K=" + std::to_string(strike) +
                         ", T=" + std::to_string(maturity) + ")");
}

double implied_vol(double call_price, double strike, double maturity) {
  return implied_vol(PriceQuote::from_call(call_price, strike), maturity);
}

}  // namespace hxai::heston
