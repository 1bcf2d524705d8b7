#include <gtest/gtest.h>

#include "hxai/attrib.hpp"
#include "hxai/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hxai;
using namespace hxai::attrib;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

Predictor linear(const VectorXd& w) {
  return [w](const MatrixXd& x) { return MatrixXd(x * w); };
}

// Nonlinear, symmetric in features 0 and 1, independent of feature 3.
MatrixXd constructed(const MatrixXd& x) {
  MatrixXd out(x.rows(), 2);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double s = x(r, 0) + x(r, 1);
    out(r, 0) = std::tanh(s) * x(r, 2) + x(r, 0) * x(r, 1) + std::exp(0.3 * x(r, 4));
    out(r, 1) = s * s - x(r, 2) * x(r, 4);
  }
  return out;
}

MatrixXd other(const MatrixXd& x) {
  MatrixXd out(x.rows(), 2);
  out.col(0) = (x.col(0).array() * x.col(4).array()).sin().matrix();
  out.col(1) = x.col(2).array().square().matrix() + x.col(3);
  return out;
}

}  // namespace

TEST(ExactShapley, LinearFunction) {
  const VectorXd phi = exact_shapley(linear(VectorXd{{2.0, 3.0}}), RowVectorXd{{1.0, 1.0}}, RowVectorXd::Zero(2), 0);
  EXPECT_NEAR(phi(0), 2.0, 1e-15);
  EXPECT_NEAR(phi(1), 3.0, 1e-15);
}

TEST(ExactShapley, Efficiency) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = test::random_mlp(5, 7, 3, seed);
    std::mt19937_64 rng(seed + 100);
    const RowVectorXd x = test::random_matrix(1, 5, rng);
    const RowVectorXd b = test::random_matrix(1, 5, rng);
    const auto e = exact_shapley_all(predictor(m), x, b);
    const MatrixXd fx = m.predict(x), fb = m.predict(b);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(e.column(k).sum(), fx(0, k) - fb(0, k), 1e-10);
    EXPECT_NEAR(e.column(kSumOutputs).sum(), fx.sum() - fb.sum(), 1e-10);
    EXPECT_NEAR(e.prediction(3), fx.sum(), 1e-12);
    EXPECT_NEAR(e.base(0), fb(0, 0), 1e-12);
  }
}

TEST(ExactShapley, Dummy) {
  const RowVectorXd x{{0.3, -1.2, 0.8, 5.0, 0.4}};
  const auto e = exact_shapley_all(constructed, x, RowVectorXd::Zero(5));
  for (Eigen::Index t = 0; t < e.phi.cols(); ++t) EXPECT_NEAR(e.phi(3, t), 0.0, 1e-10);
}

TEST(ExactShapley, Symmetry) {
  const RowVectorXd x{{0.7, 0.7, -0.4, 2.0, 1.1}};
  const RowVectorXd b{{0.1, 0.1, 0.3, -1.0, 0.0}};
  const auto e = exact_shapley_all(constructed, x, b);
  for (Eigen::Index t = 0; t < e.phi.cols(); ++t) EXPECT_NEAR(e.phi(0, t), e.phi(1, t), 1e-10);
}

TEST(ExactShapley, Additivity) {
  const RowVectorXd x{{0.7, -0.2, -0.4, 2.0, 1.1}};
  const RowVectorXd b = RowVectorXd::Constant(5, 0.2);
  const Predictor sum = [](const MatrixXd& z) { return MatrixXd(constructed(z) + other(z)); };
  const auto a = exact_shapley_all(constructed, x, b);
  const auto c = exact_shapley_all(other, x, b);
  const auto s = exact_shapley_all(sum, x, b);
  EXPECT_LT((s.phi - a.phi - c.phi).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ExactShapley, MatchesPermutationOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto m = test::random_mlp(6, 8, 2, seed);
    std::mt19937_64 rng(seed);
    const RowVectorXd x = test::random_matrix(1, 6, rng);
    const RowVectorXd b = test::random_matrix(1, 6, rng);
    const auto e = exact_shapley_all(predictor(m), x, b);
    const MatrixXd ref = oracle::permutation_shapley(predictor(m), x, b);
    EXPECT_LT((e.phi.leftCols(2) - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ExactShapley, PlayerSubset) {
  const auto m = test::random_mlp(6, 5, 1, 3);
  std::mt19937_64 rng(3);
  const RowVectorXd x = test::random_matrix(1, 6, rng);
  const std::vector<Eigen::Index> players{1, 4};
  const auto e = exact_shapley_all(predictor(m), x, RowVectorXd::Zero(6), players);
  for (Eigen::Index i : {0, 2, 3, 5}) EXPECT_EQ(e.phi(i, 0), 0.0);
  RowVectorXd partial = RowVectorXd::Zero(6);
  partial(1) = x(1);
  partial(4) = x(4);
  EXPECT_NEAR(e.column(0).sum(), m.predict(partial)(0, 0) - m.predict(RowVectorXd::Zero(6))(0, 0), 1e-12);
}

TEST(ExactShapley, TooManyPlayersThrows) {
  EXPECT_THROW(exact_shapley_all(linear(VectorXd::Ones(21)), RowVectorXd::Ones(21), RowVectorXd::Zero(21)),
               InvalidParameter);
}

TEST(SampledShapley, LinearIsExact) {
  const VectorXd w{{1.5, -2.0, 0.5, 4.0}};
  const RowVectorXd x{{1.0, 2.0, -1.0, 0.5}};
  const auto s = sampled_shapley(linear(w), x, RowVectorXd::Zero(4), 30, 1, 0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(s.phi(i), w(i) * x(i), 1e-12);
    EXPECT_NEAR(s.std_error(i), 0.0, 1e-12);
  }
}

TEST(SampledShapley, WithinThreeStandardErrors) {
  const auto m = test::random_mlp(8, 10, 1, 11);
  std::mt19937_64 rng(11);
  const RowVectorXd x = test::random_matrix(1, 8, rng);
  const RowVectorXd b = test::random_matrix(1, 8, rng);
  const VectorXd exact = exact_shapley(predictor(m), x, b, 0);
  const auto s = sampled_shapley(predictor(m), x, b, 2000, 5, 0);
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_LE(std::abs(s.phi(i) - exact(i)), 3.0 * s.std_error(i)) << i;
}

TEST(SampledShapley, EfficiencyPerPermutation) {
  const auto m = test::random_mlp(6, 6, 2, 12);
  const RowVectorXd x = RowVectorXd::LinSpaced(6, -1.0, 1.0);
  const auto s = sampled_shapley_all(predictor(m), x, RowVectorXd::Zero(6), 50, 2);
  const MatrixXd fx = m.predict(x), fb = m.predict(RowVectorXd::Zero(6));
  EXPECT_NEAR(s.column(1).sum(), fx(0, 1) - fb(0, 1), 1e-10);
}

TEST(SampledShapley, SeedDetermined) {
  const auto m = test::random_mlp(5, 6, 2, 13);
  const RowVectorXd x = RowVectorXd::LinSpaced(5, -1.0, 1.0);
  const auto a = sampled_shapley_all(predictor(m), x, RowVectorXd::Zero(5), 40, 9);
  const auto b = sampled_shapley_all(predictor(m), x, RowVectorXd::Zero(5), 40, 9);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(KernelShap, FullEnumerationMatchesExact) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Index m = 3 + static_cast<Eigen::Index>(seed % 8);
    const auto net = test::random_mlp(m, 8, 3, 200 + seed);
    std::mt19937_64 rng(seed);
    const RowVectorXd x = test::random_matrix(1, m, rng);
    const RowVectorXd b = test::random_matrix(1, m, rng);
    const auto exact = exact_shapley_all(predictor(net), x, b);
    const auto k = kernel_shap_all(predictor(net), x, b, std::size_t{1} << m, seed);
    EXPECT_LT((k.phi - exact.phi).cwiseAbs().maxCoeff(), 1e-6) << "M = " << m;
  }
}

TEST(KernelShap, LocalAccuracyUnderBudget) {
  const auto net = test::random_mlp(12, 10, 3, 21);
  std::mt19937_64 rng(21);
  const RowVectorXd x = test::random_matrix(1, 12, rng);
  const MatrixXd background = test::random_matrix(4, 12, rng);
  const auto k = kernel_shap_all(predictor(net), x, background, 300, 3);
  const MatrixXd fx = net.predict(x);
  const MatrixXd fb = net.predict(background);
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(k.base(t), fb.col(t).mean(), 1e-12);
    EXPECT_NEAR(k.column(t).sum() + k.base(t), fx(0, t), 1e-8);
  }
  EXPECT_NEAR(k.column(kSumOutputs).sum() + k.base(3), fx.sum(), 1e-8);
}

TEST(KernelShap, MissingFeatureGetsZero) {
  const auto net = test::random_mlp(6, 6, 1, 22);
  RowVectorXd x = RowVectorXd::LinSpaced(6, -1.0, 1.0);
  RowVectorXd b = RowVectorXd::Zero(6);
  x(2) = 0.7;
  b(2) = 0.7;
  const VectorXd phi = kernel_shap(predictor(net), x, b, 40, 1, 0);
  EXPECT_EQ(phi(2), 0.0);
}

TEST(KernelShap, SeedDetermined) {
  const auto net = test::random_mlp(14, 6, 1, 23);
  const RowVectorXd x = RowVectorXd::LinSpaced(14, -1.0, 1.0);
  const VectorXd a = kernel_shap(predictor(net), x, RowVectorXd::Zero(14), 200, 4, 0);
  const VectorXd b = kernel_shap(predictor(net), x, RowVectorXd::Zero(14), 200, 4, 0);
  EXPECT_EQ(a, b);
}

TEST(KernelShap, WidthMismatchThrows) {
  const auto net = test::random_mlp(4, 3, 1, 24);
  EXPECT_THROW(kernel_shap(predictor(net), RowVectorXd::Zero(4), MatrixXd::Zero(1, 5), 20, 1, 0), DimensionError);
}
