#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "ctxopt/market.hpp"
#include "ctxopt/producer.hpp"

using namespace ctxopt;

namespace {
BidStack simple_stack() {
  BidStack s;
  s.buys = {{10.0, 50.0}};
  s.sells = {{5.0, 20.0}};
  return s;
}
}  // namespace

TEST(ResidualDemand, DefinitionAtPoints) {
  auto curve = residual_demand(simple_stack());
  EXPECT_NEAR(curve.value(30.0), 5.0, 1e-12);   // buy qualifies, sell entered
  EXPECT_NEAR(curve.value(60.0), -5.0, 1e-12);  // no buys qualify
}

TEST(ResidualDemand, LimitsEqualStackTotals) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> uq(0.5, 5.0), up(-10.0, 90.0);
  for (int rep = 0; rep < 10; ++rep) {
    BidStack s;
    double qb = 0, qo = 0;
    for (int k = 0; k < 8; ++k) {
      s.buys.push_back({uq(gen), up(gen)});
      s.sells.push_back({uq(gen), up(gen)});
      qb += s.buys.back().quantity;
      qo += s.sells.back().quantity;
    }
    auto curve = residual_demand(s);
    EXPECT_NEAR(curve.value(-1e9), qb, 1e-9);
    EXPECT_NEAR(curve.value(1e9), -qo, 1e-9);
    EXPECT_NEAR(curve.max_value(), qb, 1e-9);
    EXPECT_NEAR(curve.min_value(), -qo, 1e-9);
  }
}

TEST(ResidualDemand, NonincreasingAtEveryBreakpoint) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> uq(0.5, 5.0), up(0.0, 100.0);
  BidStack s;
  for (int k = 0; k < 20; ++k) {
    s.buys.push_back({uq(gen), up(gen)});
    s.sells.push_back({uq(gen), up(gen)});
  }
  auto curve = residual_demand(s);
  double prev = curve.value(-1e9);
  for (double p : curve.breakpoints()) {
    const double at = curve.value(p);
    EXPECT_LE(at, prev + 1e-12);
    const double after = curve.value(p + 1e-9);
    EXPECT_LE(after, at + 1e-12);
    prev = after;
  }
}

TEST(ResidualDemand, RejectsEmptyStack) {
  EXPECT_THROW(residual_demand(BidStack{}), DataError);
}

TEST(FitInverseDemand, ExactRecoveryOfLinearCurve) {
  // Breakpoints placed so the inverse is exactly p = 10 - 2q at every
  // midpoint of the fitting grid.
  const int K = 512;
  const double delta = 3.0;
  BidStack s;
  for (int k = 0; k < K; ++k) {
    const double q = (k + 0.5) * delta / K;
    s.buys.push_back({delta / K, 10.0 - 2.0 * q});
  }
  s.sells = {{1.0, 1e6}};
  auto fit = fit_inverse_demand(residual_demand(s), delta, K);
  EXPECT_NEAR(fit.alpha, 10.0, 1e-9);
  EXPECT_NEAR(fit.beta, 2.0, 1e-9);
  EXPECT_LT(fit.fit_rmse, 1e-9);
}

TEST(FitInverseDemand, TwoStepCurveMatchesNormalEquations) {
  // p = 8 on [0,1], p = 4 on (1,2].
  BidStack s;
  s.buys = {{1.0, 8.0}, {1.0, 4.0}};
  s.sells = {{1.0, 1000.0}};
  const int K = 512;
  auto curve = residual_demand(s);
  auto fit = fit_inverse_demand(curve, 2.0, K);
  EXPECT_NEAR(fit.alpha, 9.0, 5e-3);
  EXPECT_NEAR(fit.beta, 3.0, 5e-3);
  // Independent normal-equation computation over the same midpoint grid.
  double s1 = 0, sq = 0, sqq = 0, sp = 0, sqp = 0;
  for (int k = 0; k < K; ++k) {
    const double q = (k + 0.5) * 2.0 / K;
    const double p = q < 1.0 ? 8.0 : 4.0;
    s1 += 1;
    sq += q;
    sqq += q * q;
    sp += p;
    sqp += q * p;
  }
  const double det = s1 * sqq - sq * sq;
  const double alpha_ref = (sqq * sp - sq * sqp) / det;
  const double slope_ref = (s1 * sqp - sq * sp) / det;
  EXPECT_NEAR(fit.alpha, alpha_ref, 1e-9);
  EXPECT_NEAR(fit.beta, -slope_ref, 1e-9);
}

TEST(FitInverseDemand, GridRefinementStable) {
  BidStack s;
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> uq(0.2, 1.0), up(1.0, 9.0);
  for (int k = 0; k < 40; ++k) s.buys.push_back({uq(gen), up(gen)});
  s.sells = {{1.0, 100.0}};
  auto curve = residual_demand(s);
  const double delta = 5.0;
  auto base = fit_inverse_demand(curve, delta, 512);
  auto fine = fit_inverse_demand(curve, delta, 4096);
  EXPECT_LE(std::abs(base.alpha - fine.alpha),
            0.01 * std::max(1.0, std::abs(fine.alpha)));
  EXPECT_LE(std::abs(base.beta - fine.beta),
            0.01 * std::max(1.0, std::abs(fine.beta)));
}

TEST(FitInverseDemand, RejectsUpwardSlopingWindow) {
  // Inverse curve increasing in q: price higher at larger quantity.
  BidStack s;
  s.buys = {{1.0, 2.0}, {1.0, 6.0}};
  s.sells = {{0.5, 1.0}};
  auto curve = residual_demand(s);
  // Window [0, 2]: p(q) is 2 then 6? The residual curve is nonincreasing,
  // so a genuinely upward-sloping window cannot arise from a stack; force
  // the rejection path with a flat-then-degenerate window instead.
  EXPECT_THROW(fit_inverse_demand(curve, 10.0), DataError);  // not covered
  // Flat window: slope zero -> nonpositive beta rejected.
  BidStack flat;
  flat.buys = {{5.0, 3.0}};
  flat.sells = {{1.0, 50.0}};
  EXPECT_THROW(fit_inverse_demand(residual_demand(flat), 2.0), SolveError);
}

TEST(SynthesizeMarket, DeterministicAndPositiveBeta) {
  MarketGenConfig cfg;
  cfg.a = (Vector(3) << 0.3, 0.8, -0.5).finished();
  auto d1 = synthesize_market(cfg, 500, 99);
  auto d2 = synthesize_market(cfg, 500, 99);
  EXPECT_EQ((d1.features() - d2.features()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((d1.outcomes() - d2.outcomes()).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < d1.size(); ++i) {
    EXPECT_GT(d1.outcomes()(i, 1), 0.0);
    EXPECT_TRUE(std::isfinite(d1.outcomes()(i, 0) / d1.outcomes()(i, 1)));
  }
}

TEST(SynthesizeMarket, ZeroNoiseGivesExactLinearGamma) {
  MarketGenConfig cfg;
  cfg.a = (Vector(2) << 1.0, 2.0).finished();
  cfg.noise_sd = 0.0;
  auto data = synthesize_market(cfg, 50, 5);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double gamma = data.outcomes()(i, 0) / data.outcomes()(i, 1);
    EXPECT_NEAR(gamma, cfg.a.dot(data.context(i)), 1e-10);
  }
}

TEST(SynthesizeMarket, WeightedLsRecoversCoefficients) {
  MarketGenConfig cfg;
  cfg.a = (Vector(3) << 0.3, 0.8, -0.5).finished();
  cfg.noise_sd = 0.3;
  auto data = synthesize_market(cfg, 20000, 31);
  auto pd = ProducerData::from_transformed(data);
  Vector w = gamma_weighted_ls(pd);
  EXPECT_LE((w - cfg.a).norm(), 0.03);
}

TEST(BidStackCsv, LongFormatRoundTrip) {
  const std::string path = "stacks_test.csv";
  {
    std::ofstream out(path);
    out << "hour,side,quantity_mw,price\n";
    out << "0,buy,10,50\n0,sell,5,20\n";
    out << "1,buy,4,70\n1,buy,2,40\n1,sell,3,90\n";
  }
  auto stacks = read_bid_stacks_csv(path);
  ASSERT_EQ(stacks.size(), 2u);
  EXPECT_EQ(stacks[0].buys.size(), 1u);
  EXPECT_EQ(stacks[1].buys.size(), 2u);
  EXPECT_NEAR(residual_demand(stacks[0]).value(30.0), 5.0, 1e-12);
  std::remove(path.c_str());
}

TEST(FitCurves, SkipsUncoveredHours) {
  std::map<int, BidStack> stacks;
  BidStack staircase;  // declining inverse over [0, 5]
  for (int k = 0; k < 5; ++k)
    staircase.buys.push_back({2.0, 60.0 - 10.0 * k});
  staircase.sells = {{1.0, 100.0}};
  stacks[0] = staircase;
  BidStack small;
  small.buys = {{0.5, 30.0}};
  small.sells = {{0.2, 80.0}};
  stacks[1] = small;  // cannot cover delta 5
  auto batch = fit_curves(stacks, 5.0);
  EXPECT_EQ(batch.skipped, 1);
  ASSERT_EQ(batch.fits.size(), 1u);
  EXPECT_EQ(batch.hours[0], 0);
  EXPECT_GT(batch.fits[0].beta, 0.0);
}
