#pragma once

namespace hxai::heston {

/// A European call quote on a unit spot with zero rates.
///
/// The quote is stored as intrinsic value plus the logarithm of the time
/// value. The time value equals the out-of-the-money option price (the call
/// for K >= 1, the put for K < 1), so deep in- or out-of-the-money quotes
/// keep full relative precision even where the call price itself rounds to
/// its intrinsic value or underflows.
class PriceQuote {
 public:
  /// Throws InvalidParameter for non-finite input or non-positive strike.
  static PriceQuote from_call(double call_price, double strike);
  static PriceQuote from_log_time_value(double log_time_value, double strike);

  double strike() const noexcept { return strike_; }
  double intrinsic() const noexcept { return strike_ < 1.0 ? 1.0 - strike_ : 0.0; }
  double log_time_value() const noexcept { return log_time_value_; }
  double time_value() const;
  double call() const;
  double put() const;

  /// Upper bound of the time value, reached as volatility tends to infinity.
  double max_time_value() const noexcept { return strike_ < 1.0 ? strike_ : 1.0; }
  /// True when intrinsic < call < 1 holds strictly.
  bool strictly_inside_bounds() const;

 private:
  PriceQuote(double strike, double log_tv) : strike_(strike), log_time_value_(log_tv) {}
  double strike_ = 1.0;
  double log_time_value_ = 0.0;
};

/// Standard normal cumulative distribution.
double norm_cdf(double x);

/// Black–Scholes call value for S0 = 1, zero rates, as a plain double.
double bs_call(double vol, double strike, double maturity);
/// Black–Scholes call value carried as a PriceQuote.
PriceQuote bs_price(double vol, double strike, double maturity);
/// log of the out-of-the-money Black–Scholes price; -inf for zero volatility.
double log_bs_time_value(double vol, double strike, double maturity);
double bs_vega(double vol, double strike, double maturity);

/// Black–Scholes implied volatility.
///
/// Bracketed solve on [1e-6, 5] (widened if needed) with Newton steps taken
/// in log-price space and bisection as the safeguard. Throws NoSolution when
/// the quote is on or outside its no-arbitrage bounds.
double implied_vol(const PriceQuote& price, double maturity);
double implied_vol(double call_price, double strike, double maturity);

}  // namespace hxai::heston
