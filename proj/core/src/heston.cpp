#include "hxai/heston.hpp"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "hxai/errors.hpp"

namespace hxai::heston {
namespace {

using cplx = std::complex<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Principal log(1 + w), accurate for small |w|.
cplx log1p_c(cplx w) {
  const double re = w.real();
  const double im = w.imag();
  return {0.5 * std::log1p(2.0 * re + re * re + im * im), std::atan2(im, 1.0 + re)};
}

void require_positive_finite(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0))
    throw InvalidParameter(std::string(what) + " must be finite and positive");
}

// Expected integrated variance over [0, T]; sets the natural frequency scale.
double total_variance(const HestonParams& p, double maturity) {
  double w = p.theta * maturity;
  if (p.kappa * maturity > 1e-8)
    w += (p.v0 - p.theta) * (1.0 - std::exp(-p.kappa * maturity)) / p.kappa;
  else
    w += (p.v0 - p.theta) * maturity;
  return std::max(w, 1e-12);
}

// Gander-Gautschi adaptive Gauss-Lobatto (4-point Lobatto vs 7-point Kronrod).
template <class F>
class AdaptiveLobatto {
 public:
  AdaptiveLobatto(const F& f, const PricerSettings& s, std::size_t& evals)
      : f_(f), settings_(s), evals_(evals) {}

  double eval(double u) {
    if (++evals_ > settings_.max_evaluations) exhausted_ = true;
    return f_(u);
  }

  // Seven-point estimate over [a, b], used to scale the tolerance.
  double rough(double a, double b) {
    const double fa = eval(a);
    const double fb = eval(b);
    double i1 = 0.0;
    double i2 = 0.0;
    kronrod(a, b, fa, fb, nullptr, i1, i2);
    return i1;
  }

  double integrate(double a, double b, double abs_tol, double& fb_out) {
    tol_ = abs_tol;
    const double fa = eval(a);
    const double fb = eval(b);
    fb_out = fb;
    return step(a, b, fa, fb, 0);
  }

  bool failed() const { return failed_ || exhausted_; }
  double fail_left() const { return fail_a_; }
  double fail_right() const { return fail_b_; }

 private:
  struct Nodes {
    double mll, ml, m, mr, mrr;
    double fmll, fml, fm, fmr, fmrr;
  };

  void kronrod(double a, double b, double fa, double fb, Nodes* out, double& i1, double& i2) {
    static const double alpha = std::sqrt(2.0 / 3.0);
    static const double beta = 1.0 / std::sqrt(5.0);
    const double h = 0.5 * (b - a);
    const double m = 0.5 * (a + b);
    Nodes n{m - alpha * h, m - beta * h, m, m + beta * h, m + alpha * h, 0, 0, 0, 0, 0};
    n.fmll = eval(n.mll);
    n.fml = eval(n.ml);
    n.fm = eval(n.m);
    n.fmr = eval(n.mr);
    n.fmrr = eval(n.mrr);
    i2 = (h / 6.0) * (fa + fb + 5.0 * (n.fml + n.fmr));
    i1 = (h / 1470.0) *
         (77.0 * (fa + fb) + 432.0 * (n.fmll + n.fmrr) + 625.0 * (n.fml + n.fmr) + 672.0 * n.fm);
    if (out) *out = n;
  }

  double step(double a, double b, double fa, double fb, int depth) {
    Nodes n{};
    double i1 = 0.0;
    double i2 = 0.0;
    kronrod(a, b, fa, fb, &n, i1, i2);
    if (!std::isfinite(i1)) {
      record_failure(a, b);
      return i1;
    }
    if (std::abs(i1 - i2) <= tol_ || n.mll <= a || b <= n.mrr || exhausted_) return i1;
    if (depth >= settings_.max_depth) {
      record_failure(a, b);
      return i1;
    }
    return step(a, n.mll, fa, n.fmll, depth + 1) + step(n.mll, n.ml, n.fmll, n.fml, depth + 1) +
           step(n.ml, n.m, n.fml, n.fm, depth + 1) + step(n.m, n.mr, n.fm, n.fmr, depth + 1) +
           step(n.mr, n.mrr, n.fmr, n.fmrr, depth + 1) + step(n.mrr, b, n.fmrr, fb, depth + 1);
  }

  void record_failure(double a, double b) {
    if (!failed_) {
      fail_a_ = a;
      fail_b_ = b;
    }
    failed_ = true;
  }

  const F& f_;
  const PricerSettings& settings_;
  std::size_t& evals_;
  double tol_ = 0.0;
  bool failed_ = false;
  bool exhausted_ = false;
  double fail_a_ = 0.0;
  double fail_b_ = 0.0;
};

// Log of the contour-shift objective at u = 0: log of the integrand peak.
double saddle_objective(const HestonParams& p, double maturity, double log_strike, double alpha) {
  const double order = alpha + 1.0;
  const double log_moment = log_char_fn(p, maturity, cplx(0.0, -order)).real();
  const double val = -alpha * log_strike + log_moment - std::log(alpha * order);
  return std::isfinite(val) ? val : kInf;
}

// Largest |order| on the requested side (> 1 for calls, < 0 for puts) whose
// moment stays finite up to `maturity`, capped at settings.moment_cap.
double moment_limit(const HestonParams& p, double maturity, OptionType type,
                    const PricerSettings& s) {
  const double sign = type == OptionType::call ? 1.0 : -1.0;
  const double base = type == OptionType::call ? 1.0 : 0.0;
  auto order_at = [&](double t) { return base + sign * t; };
  if (moment_explosion_time(p, order_at(s.moment_cap)) > maturity) return s.moment_cap;
  double lo = 0.0;
  double hi = s.moment_cap;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (moment_explosion_time(p, order_at(mid)) > maturity)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

HestonParams HestonParams::from_array(std::span<const double> a) {
  if (a.size() != kCount) throw DimensionError("Heston parameter vector must have 5 entries");
  return {a[0], a[1], a[2], a[3], a[4]};
}

void validate(const HestonParams& p) {
  for (double v : p.to_array())
    if (!std::isfinite(v)) throw InvalidParameter("Heston parameters must be finite");
  if (!(p.v0 > 0.0)) throw InvalidParameter("v0 must be positive");
  if (p.rho < -1.0 || p.rho > 1.0) throw InvalidParameter("rho must lie in [-1, 1]");
  if (p.sigma < 0.0) throw InvalidParameter("sigma must be non-negative");
  if (!(p.theta > 0.0)) throw InvalidParameter("theta must be positive");
  if (p.kappa < 0.0) throw InvalidParameter("kappa must be non-negative");
}

bool feller_satisfied(const HestonParams& p) {
  for (double v : p.to_array())
    if (!std::isfinite(v)) throw InvalidParameter("Heston parameters must be finite");
  return 2.0 * p.kappa * p.theta > p.sigma * p.sigma;
}

cplx log_char_fn(const HestonParams& p, double maturity, cplx u) {
  const cplx iu(-u.imag(), u.real());
  const cplx a = u * u + iu;
  const double s2 = p.sigma * p.sigma;
  const cplx beta = p.kappa - p.rho * p.sigma * iu;
  const cplx d = std::sqrt(beta * beta + s2 * a);
  const cplx bd = beta + d;
  const cplx e = std::exp(-d * maturity);
  const cplx one_minus_e = 1.0 - e;
  // (beta - d) / sigma^2 = -a / (beta + d); g = (beta - d) / (beta + d).
  const cplx g_over_s2 = -a / (bd * bd);
  const cplx g = s2 * g_over_s2;
  const cplx b_coef = -a / bd * one_minus_e / (1.0 - g * e);
  // log((1 - g e) / (1 - g)) / sigma^2
  const cplx w_over_s2 = g_over_s2 * one_minus_e / (1.0 - g);
  const cplx log_term = s2 == 0.0 ? w_over_s2 : log1p_c(s2 * w_over_s2) / s2;
  const cplx a_coef = p.kappa * p.theta * (-a * maturity / bd - 2.0 * log_term);
  return a_coef + b_coef * p.v0;
}

double moment_explosion_time(const HestonParams& p, double order) {
  if (order >= 0.0 && order <= 1.0) return kInf;
  const double k = p.rho * p.sigma * order - p.kappa;
  const double disc = k * k - p.sigma * p.sigma * order * (order - 1.0);
  if (disc >= 0.0) {
    if (k <= 0.0) return kInf;
    const double sd = std::sqrt(disc);
    if (sd < 1e-14 * k) return 2.0 / k;
    return std::log((k + sd) / (k - sd)) / sd;
  }
  const double sd = std::sqrt(-disc);
  return 2.0 / sd * (std::atan(sd / k) + (k < 0.0 ? std::numbers::pi : 0.0));
}

ContourPrice contour_price(const HestonParams& p, double strike, double maturity, OptionType type,
                           const PricerSettings& s) {
  validate(p);
  require_positive_finite(strike, "strike");
  require_positive_finite(maturity, "maturity");

  const double x = std::log(strike);

  // Damping factor: minimise the integrand peak over the admissible strip.
  // Calls use alpha = e^t > 0, puts alpha = -1 - e^t < -1.
  const double limit = moment_limit(p, maturity, type, s) * (1.0 - s.explosion_backoff);
  const double t_hi = std::log(type == OptionType::call ? limit - 1.0 : limit);
  const double t_lo = std::min(std::log(1e-6), t_hi - 1.0);
  auto alpha_of = [&](double t) {
    return type == OptionType::call ? std::exp(t) : -1.0 - std::exp(t);
  };
  auto objective = [&](double t) { return saddle_objective(p, maturity, x, alpha_of(t)); };
  const auto best = boost::math::tools::brent_find_minima(objective, t_lo, t_hi, 30);
  const double alpha = s.fixed_alpha != 0.0 ? s.fixed_alpha : alpha_of(best.first);
  const double peak = s.fixed_alpha != 0.0 ? saddle_objective(p, maturity, x, alpha) : best.second;
  if (!std::isfinite(peak)) {
    std::ostringstream os;
    os << "no admissible damping factor (K=" << strike << ", T=" << maturity << ")";
    throw NumericalFailure(os.str());
  }

  const double log_moment0 = log_char_fn(p, maturity, cplx(0.0, -(alpha + 1.0))).real();
  auto integrand = [&](double u) {
    const cplx z(u, -(alpha + 1.0));
    const cplx expo = log_char_fn(p, maturity, z) - cplx(alpha, u) * x - (log_moment0 - alpha * x);
    const cplx denom = cplx(alpha, u) * cplx(alpha + 1.0, u);
    return (std::exp(expo) / denom).real() * (alpha * (alpha + 1.0));
  };

  ContourPrice out;
  out.alpha = alpha;
  AdaptiveLobatto<decltype(integrand)> quad(integrand, s, out.evaluations);

  const double scale = 1.0 / std::sqrt(total_variance(p, maturity));
  double left = 0.0;
  double right = s.first_panel_scale * scale;
  const double reference = std::abs(quad.rough(left, right));
  const double tol = s.rel_tol * std::max(reference, 1e-300) * 0.25;

  double total = 0.0;
  for (int panel = 0;; ++panel) {
    double f_right = 0.0;
    const double part = quad.integrate(left, right, tol, f_right);
    total += part;
    out.panels = panel + 1;
    if (quad.failed() || !std::isfinite(total)) {
      std::ostringstream os;
      os << "Heston quadrature failed (K=" << strike << ", T=" << maturity
         << ", alpha=" << alpha << ", interval=[" << quad.fail_left() << ", " << quad.fail_right()
         << "], evaluations=" << out.evaluations << ")";
      throw NumericalFailure(os.str());
    }
    const double bound = s.rel_tol * std::abs(total);
    if (panel > 0 && std::abs(part) <= bound && std::abs(f_right) * right <= bound) break;
    if (panel >= s.max_panels) {
      std::ostringstream os;
      os << "Heston quadrature truncation did not converge (K=" << strike << ", T=" << maturity
         << ", upper=" << right << ", tail=" << part << ")";
      throw NumericalFailure(os.str());
    }
    left = right;
    right *= 2.0;
  }
  out.upper_limit = right;
  if (!(total > 0.0)) {
    std::ostringstream os;
    os << "Heston quadrature returned non-positive mass " << total << " (K=" << strike
       << ", T=" << maturity << ")";
    throw NumericalFailure(os.str());
  }
  out.log_price = peak + std::log(total) - std::log(std::numbers::pi);
  return out;
}

PriceQuote price_call(const HestonParams& p, double strike, double maturity) {
  const OptionType otm = strike >= 1.0 ? OptionType::call : OptionType::put;
  const ContourPrice r = contour_price(p, strike, maturity, otm);
  return PriceQuote::from_log_time_value(r.log_price, strike);
}

double price_put(const HestonParams& p, double strike, double maturity) {
  return std::exp(contour_price(p, strike, maturity, OptionType::put).log_price);
}

Surface surface(const HestonParams& p, const Grid& grid) {
  validate(p);
  Surface out{grid, std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.n_maturities(); ++i) {
    for (std::size_t j = 0; j < grid.n_strikes(); ++j) {
      const double t = grid.maturities()[i];
      const double k = grid.strikes()[j];
      try {
        out.values[grid.flat_index(i, j)] = implied_vol(price_call(p, k, t), t);
      } catch (const Error& e) {
        throw SurfaceError(std::string(e.what()) + " [at T=" + std::to_string(t) +
                               ", K=" + std::to_string(k) + "]",
                           i, j);
      }
    }
  }
  return out;
}

Surface price_surface(const HestonParams& p, const Grid& grid) {
  validate(p);
  Surface out{grid, std::vector<double>(grid.size())};
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const GridPoint gp = grid.point(f);
    out.values[f] = price_call(p, gp.strike, gp.maturity).call();
  }
  return out;
}

double calibration_loss(const HestonParams& p, const Grid& grid, const Surface& market) {
  if (!(market.grid == grid)) throw DimensionError("market grid differs from evaluation grid");
  if (market.values.size() != grid.size())
    throw DimensionError("market has " + std::to_string(market.values.size()) +
                         " quotes for a grid of " + std::to_string(grid.size()));
  double loss = 0.0;
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const GridPoint gp = grid.point(f);
    const double diff = price_call(p, gp.strike, gp.maturity).call() - market.values[f];
    loss += diff * diff;
  }
  return loss;
}

}  // namespace hxai::heston
