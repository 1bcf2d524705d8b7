#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "hxai/errors.hpp"
#include "hxai/preprocess.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hxai;
using namespace hxai::datagen;

namespace {

// Correlated, full-rank toy data.
Eigen::MatrixXd toy(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd z = test::random_matrix(n, 5, rng);
  Eigen::MatrixXd mix(5, 5);
  mix << 1.0, 0.5, 0.0, 0.2, 0.0,  //
      0.0, 1.0, 0.7, 0.0, 0.1,     //
      0.0, 0.0, 1.0, 0.3, 0.0,     //
      0.4, 0.0, 0.0, 1.0, 0.6,     //
      0.0, 0.2, 0.0, 0.0, 1.0;
  Eigen::MatrixXd x = z * mix;
  x.col(0).array() += 3.0;
  x.col(3) *= 10.0;
  return x;
}

}  // namespace

TEST(Standardize, ZeroMeanUnitVariance) {
  const auto x = toy(400, 1);
  const auto p = Preprocessor::fit(x, PreprocessKind::standardize);
  const Eigen::MatrixXd y = p.apply(x);
  const Eigen::MatrixXd c = oracle::covariance(y);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    EXPECT_LT(std::abs(y.col(j).mean()), 1e-10);
    EXPECT_NEAR(c(j, j), 1.0, 1e-8);
  }
}

TEST(MinMax, UnitRange) {
  const auto x = toy(300, 2);
  const Eigen::MatrixXd y = Preprocessor::fit(x, PreprocessKind::minmax).apply(x);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    EXPECT_NEAR(y.col(j).minCoeff(), 0.0, 1e-15);
    EXPECT_NEAR(y.col(j).maxCoeff(), 1.0, 1e-15);
  }
}

TEST(MinMaxZca, WhitensAndMatchesOracle) {
  const auto x = toy(500, 3);
  const auto p = Preprocessor::fit(x, PreprocessKind::minmax_zca);
  const Eigen::MatrixXd y = p.apply(x);
  const Eigen::MatrixXd c = oracle::covariance(y);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(5, 5);
  EXPECT_LT((c - id).operatorNorm(), 1e-6);

  const Eigen::MatrixXd& w = p.whitening();
  EXPECT_LT((w - w.transpose()).cwiseAbs().maxCoeff(), 1e-12);

  Eigen::MatrixXd scaled = x;
  for (Eigen::Index j = 0; j < 5; ++j)
    scaled.col(j) = (x.col(j).array() - p.column_min()(j)) / (p.column_max()(j) - p.column_min()(j));
  const Eigen::MatrixXd expected = oracle::inverse_sqrt(oracle::covariance(scaled));
  EXPECT_LT((w - expected).cwiseAbs().maxCoeff(), 1e-8 * expected.cwiseAbs().maxCoeff());
  EXPECT_EQ(p.floored_eigenvalues(), 0u);
}

TEST(Preprocessor, InverseUndoesApply) {
  const auto x = toy(200, 4);
  for (auto kind : {PreprocessKind::minmax, PreprocessKind::minmax_zca, PreprocessKind::standardize}) {
    const auto p = Preprocessor::fit(x, kind);
    EXPECT_LT((p.inverse(p.apply(x)) - x).cwiseAbs().maxCoeff(), 1e-9) << to_string(kind);
  }
}

TEST(Preprocessor, StatisticsComeFromTrainOnly) {
  const auto train = toy(200, 5);
  Eigen::MatrixXd test = toy(50, 6);
  test.array() += 100.0;
  const auto a = Preprocessor::fit(train, PreprocessKind::standardize);
  const Eigen::MatrixXd before = a.apply(train);
  (void)a.apply(test);
  EXPECT_EQ(a.apply(train), before);
  EXPECT_GT(a.apply(test).mean(), 1.0);
}

TEST(Preprocessor, ConstantColumnThrows) {
  Eigen::MatrixXd x = toy(100, 7);
  x.col(2).setConstant(1.5);
  for (auto kind : {PreprocessKind::minmax, PreprocessKind::minmax_zca, PreprocessKind::standardize})
    EXPECT_THROW(Preprocessor::fit(x, kind), PreprocessingError);
}

TEST(Preprocessor, RankDeficientCovarianceIsFloored) {
  Eigen::MatrixXd x = toy(100, 8);
  x.col(4) = 2.0 * x.col(1) - x.col(0);
  const auto p = Preprocessor::fit(x, PreprocessKind::minmax_zca);
  EXPECT_EQ(p.floored_eigenvalues(), 1u);
  EXPECT_TRUE(p.apply(x).allFinite());
}

TEST(Preprocessor, JsonRoundTrip) {
  const auto x = toy(100, 9);
  const auto p = Preprocessor::fit(x, PreprocessKind::minmax_zca);
  const auto q = Preprocessor::from_json(p.to_json());
  EXPECT_EQ(p.apply(x), q.apply(x));
  EXPECT_EQ(q.kind(), PreprocessKind::minmax_zca);
}

TEST(Preprocessor, WrongWidthThrows) {
  const auto p = Preprocessor::fit(toy(50, 10), PreprocessKind::minmax);
  EXPECT_THROW(p.apply(Eigen::MatrixXd::Zero(3, 4)), DimensionError);
}

TEST(Preprocessor, KindNames) {
  EXPECT_EQ(parse_preprocess_kind("minmax_zca"), PreprocessKind::minmax_zca);
  EXPECT_THROW(parse_preprocess_kind("whiten"), InvalidParameter);
}
