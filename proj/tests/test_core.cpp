#include <gtest/gtest.h>

#include <cstdio>
#include <set>

#include "ctxopt/dataset.hpp"
#include "ctxopt/ols.hpp"
#include "support/fixtures.hpp"

using namespace ctxopt;

TEST(PredictLinear, ZeroCoefficients) {
  LinearCoefficients w(Vector::Zero(3));
  Vector x(3);
  x << 1, -4, 7;
  EXPECT_EQ(predict_linear(w, x), 0.0);
}

TEST(PredictLinear, ExampleCoefficients) {
  LinearCoefficients w((Vector(2) << 5.0, 1.0).finished());
  Vector x(2);
  x << 1, 2;
  EXPECT_NEAR(predict_linear(w, x), 7.0, 1e-12);

  LinearCoefficients wg((Vector(2) << -0.138, 0.341).finished());
  Vector x4(2);
  x4 << 1, 4;
  EXPECT_NEAR(predict_linear(wg, x4), 1.226, 1e-12);
}

TEST(PredictLinear, DimensionMismatchThrows) {
  LinearCoefficients w(Vector::Zero(2));
  EXPECT_THROW(predict_linear(w, Vector::Zero(3)), DataError);
}

TEST(PredictLinear, Linearity) {
  auto gen = testkit::rng(7);
  std::normal_distribution<double> d;
  for (int rep = 0; rep < 50; ++rep) {
    Vector w(4), x1(4), x2(4);
    for (int j = 0; j < 4; ++j) {
      w[j] = d(gen);
      x1[j] = d(gen);
      x2[j] = d(gen);
    }
    const double a = d(gen), b = d(gen);
    LinearCoefficients lc(w);
    EXPECT_NEAR(predict_linear(lc, a * x1 + b * x2),
                a * predict_linear(lc, x1) + b * predict_linear(lc, x2),
                1e-12);
  }
}

TEST(OlsFit, RecoversExampleCoefficients) {
  auto data = testkit::example_market_sample();
  auto wa = ols_fit(data, 0);
  EXPECT_NEAR(wa.w[0], 5.000, 1e-3);
  EXPECT_NEAR(wa.w[1], 1.000, 1e-3);
  auto wb = ols_fit(data, 1);
  EXPECT_NEAR(wb.w[0], 12.298, 1e-3);
  EXPECT_NEAR(wb.w[1], -0.878, 1e-3);
}

TEST(OlsFit, ConstantTargetWithIntercept) {
  Matrix X(5, 3);
  Matrix Y(5, 1);
  auto gen = testkit::rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = u(gen);
    X(i, 2) = u(gen);
    Y(i, 0) = 4.25;
  }
  auto w = ols_fit(ContextDataset(X, Y), 0);
  EXPECT_NEAR(w.w[0], 4.25, 1e-9);
  EXPECT_NEAR(w.w[1], 0.0, 1e-9);
  EXPECT_NEAR(w.w[2], 0.0, 1e-9);
}

TEST(OlsFit, ResidualOrthogonalToFeatures) {
  auto gen = testkit::rng(11);
  std::normal_distribution<double> d;
  Matrix X(40, 3), Y(40, 1);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = 1;
    X(i, 1) = d(gen);
    X(i, 2) = d(gen);
    Y(i, 0) = 2 + 0.5 * X(i, 1) - X(i, 2) + 0.1 * d(gen);
  }
  ContextDataset data(X, Y);
  auto w = ols_fit(data, 0);
  Vector resid = Y.col(0) - X * w.w;
  const double rel = (X.transpose() * resid).cwiseAbs().maxCoeff() /
                     std::max(1.0, Y.col(0).cwiseAbs().maxCoeff());
  EXPECT_LE(rel, 1e-8);
}

TEST(OlsFit, SingularFeaturesMinimumNorm) {
  Matrix X(6, 3), Y(6, 1);
  auto gen = testkit::rng(5);
  std::normal_distribution<double> d;
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = 1;
    X(i, 1) = d(gen);
    X(i, 2) = 2.0 * X(i, 1);  // collinear
    Y(i, 0) = 3 * X(i, 1) + 1;
  }
  OlsDiagnostics diag;
  auto w = ols_fit(ContextDataset(X, Y), 0, &diag);
  EXPECT_TRUE(diag.rank_deficient);
  EXPECT_EQ(diag.rank, 2);
  Vector resid = Y.col(0) - X * w.w;
  EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Split, PaperBinProtocol) {
  Matrix X = Matrix::Random(200, 2), Y = Matrix::Random(200, 1);
  ContextDataset data(X, Y);
  SplitPlan plan{200, 0.8, 5, 42};
  auto splits = split(data, plan);
  ASSERT_EQ(splits.size(), 5u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train_rows.size(), 160u);
    EXPECT_EQ(s.test_rows.size(), 40u);
  }
}

TEST(Split, BinCountArithmetic) {
  Matrix X = Matrix::Random(400, 2), Y = Matrix::Random(400, 1);
  SplitPlan plan{200, 0.8, 3, 1};
  auto splits = split(ContextDataset(X, Y), plan);
  EXPECT_EQ(splits.size(), 6u);  // 2 bins x 3 repeats
}

TEST(Split, DeterministicAndPartitions) {
  Matrix X = Matrix::Random(60, 2), Y = Matrix::Random(60, 1);
  ContextDataset data(X, Y);
  SplitPlan plan{20, 0.75, 4, 9001};
  auto a = split(data, plan);
  auto b = split(data, plan);
  ASSERT_EQ(a.size(), b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].train_rows, b[k].train_rows);
    EXPECT_EQ(a[k].test_rows, b[k].test_rows);
    // train and test partition the bin exactly
    std::set<int> all(a[k].train_rows.begin(), a[k].train_rows.end());
    for (int r : a[k].test_rows) EXPECT_TRUE(all.insert(r).second);
    EXPECT_EQ(all.size(), 20u);
    for (int r : all) {
      EXPECT_GE(r, a[k].bin * 20);
      EXPECT_LT(r, (a[k].bin + 1) * 20);
    }
  }
}

TEST(Split, RejectsOversizedBin) {
  Matrix X = Matrix::Random(10, 2), Y = Matrix::Random(10, 1);
  SplitPlan plan{20, 0.8, 1, 0};
  EXPECT_THROW(split(ContextDataset(X, Y), plan), DataError);
}

TEST(DatasetCsv, RoundTrip) {
  auto data = testkit::example_market_sample();
  const std::string path = "core_roundtrip.csv";
  write_dataset_csv(data, path);
  auto back = read_dataset_csv(path);
  ASSERT_EQ(back.size(), data.size());
  ASSERT_EQ(back.feature_dim(), data.feature_dim());
  ASSERT_EQ(back.outcome_dim(), data.outcome_dim());
  EXPECT_LE((back.features() - data.features()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((back.outcomes() - data.outcomes()).cwiseAbs().maxCoeff(), 1e-15);
  std::remove(path.c_str());
}

TEST(Dataset, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(ContextDataset(Matrix(0, 2), Matrix(0, 1)), DataError);
  Matrix X = Matrix::Ones(2, 2), Y = Matrix::Ones(2, 1);
  Y(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ContextDataset(X, Y), DataError);
}
