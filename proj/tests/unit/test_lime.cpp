#include <gtest/gtest.h>

#include "hxai/attrib.hpp"
#include "hxai/errors.hpp"
#include "test_util.hpp"

using namespace hxai;
using namespace hxai::attrib;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

Predictor affine(const MatrixXd& w, const RowVectorXd& c) {
  return [w, c](const MatrixXd& x) { return MatrixXd((x * w).rowwise() + c); };
}

}  // namespace

TEST(Lime, RecoversLinearCoefficients) {
  std::mt19937_64 rng(1);
  const MatrixXd w = test::random_matrix(10, 2, rng);
  const RowVectorXd c{{0.5, -1.0}};
  const RowVectorXd x = test::random_matrix(1, 10, rng);
  const RowVectorXd mean = test::random_matrix(1, 10, rng);
  for (double width : {0.0, 0.5, 2.0, 25.0}) {
    LimeOptions o;
    o.kernel_width = width;
    o.n_samples = 500;
    const auto r = lime_explain(affine(w, c), x, mean, o, 3, 1);
    // Masked features take the mean, so the surrogate slope is w (x - mean).
    const VectorXd expected = w.col(1).cwiseProduct((x - mean).transpose());
    EXPECT_LT((r.weights - expected).cwiseAbs().maxCoeff(), 1e-6) << "width " << width;
    EXPECT_NEAR(r.intercept + r.weights.sum(), (x * w.col(1))(0) + c(1), 1e-6);
    EXPECT_NEAR(r.r2, 1.0, 1e-9);
  }
}

TEST(Lime, AllTargetsShareSamples) {
  std::mt19937_64 rng(2);
  const MatrixXd w = test::random_matrix(6, 3, rng);
  const RowVectorXd x = test::random_matrix(1, 6, rng);
  const RowVectorXd mean = RowVectorXd::Zero(6);
  LimeOptions o;
  o.n_samples = 300;
  const auto all = lime_explain_all(affine(w, RowVectorXd::Zero(3)), x, mean, o, 5);
  ASSERT_EQ(all.size(), 4u);
  const VectorXd sum = all[0].weights + all[1].weights + all[2].weights;
  EXPECT_LT((all[3].weights - sum).cwiseAbs().maxCoeff(), 1e-6);
  const std::vector<int> only{2};
  const auto one = lime_explain_all(affine(w, RowVectorXd::Zero(3)), x, mean, o, 5, only);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].weights, all[2].weights);
}

TEST(Lime, SeedDetermined) {
  const auto net = test::random_mlp(8, 6, 2, 3);
  const RowVectorXd x = RowVectorXd::LinSpaced(8, -1.0, 1.0);
  LimeOptions o;
  o.n_samples = 400;
  const auto a = lime_explain(predictor(net), x, RowVectorXd::Zero(8), o, 11, 0);
  const auto b = lime_explain(predictor(net), x, RowVectorXd::Zero(8), o, 11, 0);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.intercept, b.intercept);
}

TEST(Lime, TooFewSamplesThrows) {
  LimeOptions o;
  o.n_samples = 5;
  EXPECT_THROW(lime_explain(affine(MatrixXd::Ones(4, 1), RowVectorXd::Zero(1)), RowVectorXd::Ones(4),
                            RowVectorXd::Zero(4), o, 1, 0),
               InvalidParameter);
}

TEST(Lime, VanishingKernelIsDegenerate) {
  LimeOptions o;
  o.n_samples = 100;
  o.kernel_width = 1e-3;
  EXPECT_THROW(lime_explain(affine(MatrixXd::Ones(4, 1), RowVectorXd::Zero(1)), RowVectorXd::Ones(4),
                            RowVectorXd::Zero(4), o, 1, 0),
               DegenerateFit);
}

TEST(Lime, OutputOutOfRangeThrows) {
  LimeOptions o;
  o.n_samples = 50;
  EXPECT_THROW(lime_explain(affine(MatrixXd::Ones(4, 1), RowVectorXd::Zero(1)), RowVectorXd::Ones(4),
                            RowVectorXd::Zero(4), o, 1, 3),
               InvalidParameter);
}
