#include <Eigen/QR>
#include <boost/math/tools/minima.hpp>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "hxai/attrib.hpp"
#include "hxai/errors.hpp"
#include "hxai/rng.hpp"

namespace hxai::attrib {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct Samples {
  MatrixXd z;       // n x M binary masks
  VectorXd kernel;  // sample weights
  MatrixXd y;       // n x targets (outputs then sum)
};

Samples draw_samples(const Predictor& f, const RowVectorXd& x, const RowVectorXd& mean, const LimeOptions& o,
                     std::uint64_t seed) {
  const Index m = x.size();
  if (mean.size() != m)
    throw DimensionError("mean has " + std::to_string(mean.size()) + " features, instance " + std::to_string(m));
  if (o.n_samples < 2 * static_cast<std::size_t>(m))
    throw InvalidParameter("LIME needs at least 2M = " + std::to_string(2 * m) + " samples");
  if (!(o.huber_delta > 0.0)) throw InvalidParameter("huber_delta must be positive");
  if (!(o.ridge >= 0.0)) throw InvalidParameter("ridge must be non-negative");
  const double width = o.kernel_width > 0.0 ? o.kernel_width : 0.75 * std::sqrt(static_cast<double>(m));

  const auto n = static_cast<Index>(o.n_samples);
  Samples s;
  s.z = MatrixXd::Ones(n, m);
  s.kernel.resize(n);
  MatrixXd rows = x.replicate(n, 1);
  auto rng = make_stream(seed, 0);
  std::vector<Index> perm(static_cast<std::size_t>(m));
  const std::uint64_t max_off = m > 1 ? static_cast<std::uint64_t>(m - 1) : 1;
  s.kernel(0) = 1.0;
  for (Index k = 1; k < n; ++k) {
    const auto off = static_cast<Index>(1 + uniform_index(rng, max_off));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < off; ++i) {
      const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(m - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      const Index feature = perm[static_cast<std::size_t>(i)];
      s.z(k, feature) = 0.0;
      rows(k, feature) = mean(feature);
    }
    s.kernel(k) = std::exp(-static_cast<double>(off) / (width * width));
  }
  const MatrixXd out = f(rows);
  s.y.resize(n, out.cols() + 1);
  s.y.leftCols(out.cols()) = out;
  s.y.col(out.cols()) = out.rowwise().sum();
  return s;
}

double huber(double t, double delta) { return std::abs(t) <= delta ? t * t : 2.0 * delta * std::abs(t) - delta * delta; }

/// Huber regression with concomitant scale:
///   sum_k w_k (sigma + sigma H(r_k / sigma)) + ridge |beta|^2
/// minimized by alternating a 1-D scale search and reweighted ridge steps.
LimeResult fit_huber(const MatrixXd& z, const VectorXd& w, const VectorXd& y, double delta, double ridge) {
  const Index n = z.rows();
  const Index m = z.cols();
  MatrixXd design(n, m + 1);
  design.col(0).setOnes();
  design.rightCols(m) = z;

  const double wsum = w.sum();
  const RowVectorXd zbar = (w.transpose() * z) / wsum;
  const RowVectorXd zvar = (w.asDiagonal() * (z.rowwise() - zbar).array().square().matrix()).colwise().sum();
  if (!(zvar.maxCoeff() > 0.0)) throw DegenerateFit("no feature varies across the weighted LIME samples");

  VectorXd penalty = VectorXd::Constant(m + 1, ridge);
  penalty(0) = 0.0;
  // Least squares on the sqrt-weighted design plus penalty rows; avoids
  // forming the normal equations, which lose definiteness when kernel
  // weights span many orders of magnitude.
  auto solve = [&](const VectorXd& weights) {
    const double unit = weights.maxCoeff();
    const VectorXd root = (weights / unit).cwiseSqrt();
    MatrixXd a = MatrixXd::Zero(n + m + 1, m + 1);
    VectorXd b = VectorXd::Zero(n + m + 1);
    a.topRows(n) = root.asDiagonal() * design;
    b.head(n) = root.cwiseProduct(y);
    a.bottomRows(m + 1).diagonal() = (penalty / unit).cwiseSqrt();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    if (qr.rank() < m + 1) throw NumericalFailure("LIME weighted solve failed");
    return VectorXd(qr.solve(b));
  };

  auto objective = [&](const VectorXd& theta, double sigma) {
    const VectorXd r = y - design * theta;
    double total = 0.0;
    for (Index k = 0; k < n; ++k) total += w(k) * (sigma + sigma * huber(r(k) / sigma, delta));
    return total + ridge * theta.tail(m).squaredNorm();
  };

  VectorXd theta = solve(w);
  const double scale = std::max(y.cwiseAbs().maxCoeff(), 1.0);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    const VectorXd r = y - design * theta;
    const double rmax = r.cwiseAbs().maxCoeff();
    // Residuals at rounding level say nothing about the scale.
    if (rmax <= 1e-13 * scale) break;
    const double hi = rmax * (1.0 + 1.0 / delta);
    const double lo = std::max(hi * 1e-15, scale * 1e-300);
    auto g = [&](double log_sigma) {
      const double sigma = std::exp(log_sigma);
      double total = 0.0;
      for (Index k = 0; k < n; ++k) total += w(k) * (sigma + sigma * huber(r(k) / sigma, delta));
      return total;
    };
    const double sigma =
        std::exp(boost::math::tools::brent_find_minima(g, std::log(lo), std::log(hi), 52).first);

    VectorXd u(n);
    for (Index k = 0; k < n; ++k) {
      const double a = std::abs(r(k));
      u(k) = w(k) * (a <= delta * sigma ? 1.0 / sigma : delta / a);
    }
    const VectorXd next = solve(u);
    const double step = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    const double value = objective(theta, sigma);
    if (step <= 1e-13 * (1.0 + theta.cwiseAbs().maxCoeff())) break;
    if (std::abs(previous - value) <= 1e-15 * std::abs(value)) break;
    previous = value;
  }

  LimeResult out;
  out.intercept = theta(0);
  out.weights = theta.tail(m);
  const VectorXd r = y - design * theta;
  const double ybar = w.dot(y) / wsum;
  const double ss_res = w.dot(r.cwiseProduct(r));
  const double ss_tot = w.dot((y.array() - ybar).square().matrix());
  out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return out;
}

Index target_column(Index targets, int output_index) {
  if (output_index == kSumOutputs) return targets - 1;
  if (output_index < 0 || output_index >= targets - 1)
    throw InvalidParameter("output index " + std::to_string(output_index) + " out of range");
  return output_index;
}

}  // namespace

std::vector<LimeResult> lime_explain_all(const Predictor& f, const RowVectorXd& x, const RowVectorXd& mean,
                                         const LimeOptions& options, std::uint64_t seed,
                                         std::span<const int> outputs) {
  const auto s = draw_samples(f, x, mean, options, seed);
  std::vector<LimeResult> out;
  if (outputs.empty()) {
    for (Index t = 0; t < s.y.cols(); ++t)
      out.push_back(fit_huber(s.z, s.kernel, s.y.col(t), options.huber_delta, options.ridge));
  } else {
    for (int o : outputs)
      out.push_back(fit_huber(s.z, s.kernel, s.y.col(target_column(s.y.cols(), o)), options.huber_delta,
                              options.ridge));
  }
  return out;
}

LimeResult lime_explain(const Predictor& f, const RowVectorXd& x, const RowVectorXd& mean,
                        const LimeOptions& options, std::uint64_t seed, int output_index) {
  const std::array<int, 1> one{output_index};
  return lime_explain_all(f, x, mean, options, seed, one).front();
}

}  // namespace hxai::attrib
