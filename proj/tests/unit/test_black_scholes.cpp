#include <gtest/gtest.h>

#include <cmath>

#include "hxai/black_scholes.hpp"
#include "hxai/errors.hpp"
#include "hxai/grid.hpp"
#include "oracles.hpp"

using namespace hxai;
using namespace hxai::heston;

TEST(BlackScholes, ZeroVolIsIntrinsic) {
  EXPECT_DOUBLE_EQ(bs_price(0.0, 0.8, 1.0).call(), 0.2);
  EXPECT_DOUBLE_EQ(bs_price(0.0, 1.2, 1.0).call(), 0.0);
}

TEST(BlackScholes, AtmValue) {
  const double expected = 2.0 * 0.5 * std::erfc(-0.1 / std::sqrt(2.0)) - 1.0;
  EXPECT_NEAR(bs_price(0.2, 1.0, 1.0).call(), expected, 1e-14);
  EXPECT_NEAR(bs_price(0.2, 1.0, 1.0).call(), 0.0797, 1e-4);
}

TEST(BlackScholes, HugeVolTendsToSpot) { EXPECT_NEAR(bs_price(100.0, 1.0, 1.0).call(), 1.0, 1e-6); }

TEST(BlackScholes, MatchesOracleFormula) {
  for (double v : {0.05, 0.2, 0.7, 1.5})
    for (double k : Grid::canonical().strikes())
      for (double t : Grid::canonical().maturities())
        EXPECT_NEAR(bs_call(v, k, t), oracle::bs_call(v, k, t), 1e-13) << v << " " << k << " " << t;
}

TEST(BlackScholes, NonFiniteInputThrows) {
  EXPECT_THROW(bs_price(std::nan(""), 1.0, 1.0), InvalidParameter);
  EXPECT_THROW(bs_price(0.2, 1.0, std::numeric_limits<double>::infinity()), InvalidParameter);
}

TEST(ImpliedVol, RoundTripSingle) { EXPECT_NEAR(implied_vol(bs_price(0.3, 1.2, 0.5), 0.5), 0.3, 1e-8); }

TEST(ImpliedVol, RoundTripOverGrid) {
  const Grid& g = Grid::canonical();
  for (double v = 0.01; v <= 2.0 + 1e-12; v += 0.01)
    for (double k : g.strikes())
      for (double t : g.maturities()) ASSERT_NEAR(implied_vol(bs_price(v, k, t), t), v, 1e-8) << v << " " << k << " " << t;
}

TEST(ImpliedVol, RepricesWithinTolerance) {
  for (double v : {0.05, 0.3, 1.0})
    for (double k : {0.5, 1.0, 1.5}) {
      const auto q = bs_price(v, k, 1.0);
      EXPECT_NEAR(bs_call(implied_vol(q, 1.0), k, 1.0), q.call(), 1e-10);
    }
}

TEST(ImpliedVol, BoundaryHasNoSolution) {
  EXPECT_THROW(implied_vol(0.25, 0.75, 1.0), NoSolution);
  EXPECT_THROW(implied_vol(0.0, 1.2, 1.0), NoSolution);
  EXPECT_THROW(implied_vol(1.0, 1.0, 1.0), NoSolution);
  EXPECT_THROW(implied_vol(1.5, 1.0, 1.0), NoSolution);
}

TEST(PriceQuote, TimeValueKeepsPrecision) {
  const auto q = bs_price(0.1, 0.5, 0.1);
  EXPECT_GT(q.time_value(), 0.0);
  EXPECT_LT(q.time_value(), 1e-100);
  EXPECT_DOUBLE_EQ(q.call(), 0.5);
  EXPECT_NEAR(implied_vol(q, 0.1), 0.1, 1e-8);
}

TEST(PriceQuote, FromCallRejectsBadStrike) { EXPECT_THROW(PriceQuote::from_call(0.1, 0.0), InvalidParameter); }
