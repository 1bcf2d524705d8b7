#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "hxai/black_scholes.hpp"
#include "hxai/grid.hpp"

namespace hxai::heston {

/// Heston parameter set psi in label order (v0, rho, sigma, theta, kappa).
struct HestonParams {
  double v0 = 0.0;     // initial variance
  double rho = 0.0;    // spot/variance correlation
  double sigma = 0.0;  // volatility of variance
  double theta = 0.0;  // long-run variance
  double kappa = 0.0;  // mean-reversion speed

  static constexpr std::size_t kCount = 5;
  static constexpr std::array<std::string_view, kCount> kNames = {"v0", "rho", "sigma", "theta",
                                                                   "kappa"};

  std::array<double, kCount> to_array() const { return {v0, rho, sigma, theta, kappa}; }
  static HestonParams from_array(std::span<const double> a);

  bool operator==(const HestonParams&) const = default;
};

/// Throws InvalidParameter unless v0 > 0, |rho| <= 1, sigma >= 0, theta > 0,
/// kappa >= 0 and all fields are finite.
void validate(const HestonParams& p);

/// 2 kappa theta > sigma^2, strictly. Throws InvalidParameter on non-finite input.
bool feller_satisfied(const HestonParams& p);

/// Quadrature and contour-search constants of the Fourier pricer.
struct PricerSettings {
  double rel_tol = 1e-10;          // per-price relative quadrature tolerance
  int max_depth = 48;              // adaptive Gauss-Lobatto recursion limit
  int max_panels = 80;             // truncation: doubling panels beyond the first
  std::size_t max_evaluations = 400000;
  double first_panel_scale = 8.0;  // first panel length in units of 1/sqrt(total variance)
  double moment_cap = 1e5;         // largest |moment order| searched for the damping factor
  double explosion_backoff = 1e-3; // stay this fraction inside the moment-explosion boundary
  double fixed_alpha = 0.0;        // nonzero: use this damping factor instead of the saddle search
};

inline constexpr PricerSettings kPricerSettings{};

enum class OptionType { call, put };

/// log E[exp(i u X_T)], X_T = log(S_T / S0), zero rates. Uses the
/// rotation-free ("little trap") form, rearranged so that the sigma -> 0
/// limit is evaluated without cancellation.
std::complex<double> log_char_fn(const HestonParams& p, double maturity, std::complex<double> u);

/// Time at which E[S_T^order] becomes infinite (+inf when it never does).
double moment_explosion_time(const HestonParams& p, double order);

struct ContourPrice {
  double log_price = 0.0;  // log of the option value
  double alpha = 0.0;      // damping factor of the integration contour
  double upper_limit = 0.0;
  std::size_t evaluations = 0;
  int panels = 0;
};

/// Damped Fourier price of a call or put, with the damping factor chosen at
/// the saddle of the integrand so small out-of-the-money values keep their
/// relative accuracy. Throws NumericalFailure if the quadrature fails.
ContourPrice contour_price(const HestonParams& p, double strike, double maturity, OptionType type,
                           const PricerSettings& settings = kPricerSettings);

/// Call price C(psi; K, T) = E[(S_T - K)^+] with S0 = 1.
PriceQuote price_call(const HestonParams& p, double strike, double maturity);

/// Put price computed on the put contour (independent of the call contour).
double price_put(const HestonParams& p, double strike, double maturity);

/// Values over a grid, maturity-major.
struct Surface {
  Grid grid;
  std::vector<double> values;

  double at(std::size_t maturity_index, std::size_t strike_index) const {
    return values[grid.flat_index(maturity_index, strike_index)];
  }
};

/// Implied-volatility surface. Errors carry the failing grid location.
Surface surface(const HestonParams& p, const Grid& grid = Grid::canonical());

/// Call prices over a grid.
Surface price_surface(const HestonParams& p, const Grid& grid = Grid::canonical());

/// Sum of squared call-price differences over the grid of `market`.
/// Throws DimensionError when the market grid differs from `grid` or the
/// value count does not match.
double calibration_loss(const HestonParams& p, const Grid& grid, const Surface& market);

}  // namespace hxai::heston
