#pragma once

// Reference implementations used only by tests. None of them calls the code
// path it checks.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "hxai/heston.hpp"
#include "hxai/nnet.hpp"

namespace oracle {

struct McEstimate {
  double price = 0.0;
  double std_error = 0.0;
};

/// Call prices by full-truncation Euler on (log S, v), S0 = 1, zero rates.
/// All maturities are read off the same paths; result[i][j] is maturity i,
/// strike j. Maturities are rounded to whole steps.
std::vector<std::vector<McEstimate>> mc_heston_calls(const hxai::heston::HestonParams& p,
                                                     const std::vector<double>& maturities,
                                                     const std::vector<double>& strikes, std::size_t paths,
                                                     int steps_per_year, std::uint64_t seed);

/// Black-Scholes call on unit spot, zero rates, via erfc.
double bs_call(double vol, double strike, double maturity);

/// Implied vol by plain bisection on [1e-9, 10] until the bracket stops
/// shrinking.
double implied_vol_bisect(double call_price, double strike, double maturity);

/// Central differences of f() with respect to every entry of `m`, which is
/// perturbed in place and restored.
Eigen::MatrixXd fd_gradient(const std::function<double()>& f, Eigen::MatrixXd& m, double h = 1e-5);

/// |a - b| / max(|a|, |b|) in Frobenius norm; 0 when both vanish.
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct GradCheck {
  double input = 0.0;       // relative error of dL/dx
  double parameters = 0.0;  // worst relative error over parameter matrices
};

/// Checks layer.backward against central differences of sum(G .* layer(x))
/// for a random batch x and random weights G.
GradCheck check_layer(hxai::nnet::Layer& layer, Eigen::Index batch, std::uint64_t seed, double h = 1e-5);

/// Layer of the given kind with random shape, parameters and bounds.
std::unique_ptr<hxai::nnet::Layer> random_layer(hxai::nnet::LayerKind kind, std::mt19937_64& rng);

using Function = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Shapley values (features x outputs) averaged over all M! orderings of the
/// features. Absent features take the baseline value. M <= 9.
Eigen::MatrixXd permutation_shapley(const Function& f, const Eigen::RowVectorXd& x,
                                    const Eigen::RowVectorXd& baseline);

/// Sample covariance with the n - 1 denominator.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& x);

/// C^(-1/2) through a Jacobi SVD of a symmetric positive definite matrix.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c);

}  // namespace oracle
