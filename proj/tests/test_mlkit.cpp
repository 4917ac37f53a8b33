#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlcomp/error.hpp"
#include "mlcomp/mlkit.hpp"

namespace mlcomp::mlkit {
namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = g(rng);
  }
  return X;
}

// Columns with mixed scales and offsets, plus one constant column.
Matrix feature_like(std::mt19937_64& rng, Eigen::Index n) {
  Matrix X = random_matrix(rng, n, 8);
  for (Eigen::Index j = 0; j < 8; ++j) X.col(j) = X.col(j).array() * std::pow(10.0, j - 3) + 5.0 * j;
  X.col(3).setConstant(4.25);
  return X;
}

const PreprocessorKind kScalers[] = {PreprocessorKind::MeanStd, PreprocessorKind::MinMax,
                                     PreprocessorKind::MaxAbs, PreprocessorKind::Robust};

TEST(Scalers, MeanStdStandardizes) {
  std::mt19937_64 rng(1);
  const Matrix X = feature_like(rng, 50);
  const auto pp = Preprocessor::fit({PreprocessorKind::MeanStd, {}}, X);
  const Matrix Z = pp.transform(X);
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    const double mean = Z.col(j).mean();
    const double sd = std::sqrt((Z.col(j).array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 1e-9);
    if (j == 3) {
      EXPECT_EQ(Z.col(j).cwiseAbs().maxCoeff(), 0.0);
    } else {
      EXPECT_NEAR(sd, 1.0, 1e-9);
    }
  }
}

TEST(Scalers, MinMaxInUnitInterval) {
  std::mt19937_64 rng(2);
  const Matrix X = feature_like(rng, 40);
  const Matrix Z = Preprocessor::fit({PreprocessorKind::MinMax, {}}, X).transform(X);
  EXPECT_GE(Z.minCoeff(), 0.0);
  EXPECT_LE(Z.maxCoeff(), 1.0);
}

TEST(Scalers, ConstantColumnsMapToZeroAndRoundTrip) {
  std::mt19937_64 rng(3);
  const Matrix X = feature_like(rng, 30);
  for (auto kind : kScalers) {
    const auto pp = Preprocessor::fit({kind, {}}, X);
    const Matrix Z = pp.transform(X);
    EXPECT_EQ(Z.col(3).cwiseAbs().maxCoeff(), 0.0) << preprocessor_name(kind);
    const Matrix back = pp.inverse_transform(Z);
    EXPECT_LE((back - X).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, X.cwiseAbs().maxCoeff()))
        << preprocessor_name(kind);
  }
}

TEST(Scalers, RobustIgnoresUpperOutliers) {
  const Eigen::Index n = 40;
  Matrix X(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i);
  Matrix Y = X;
  // Replace the largest 10% by values a million times larger.
  for (Eigen::Index i = n - 4; i < n; ++i) Y(i, 0) = X(i, 0) * 1e6;
  const auto a = Preprocessor::fit({PreprocessorKind::Robust, {}}, X);
  const auto b = Preprocessor::fit({PreprocessorKind::Robust, {}}, Y);
  const Matrix probe = X.topRows(n - 4);
  EXPECT_LE((a.transform(probe) - b.transform(probe)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Scalers, RejectsTooFewRowsAndWrongWidth) {
  EXPECT_THROW(Preprocessor::fit({PreprocessorKind::MeanStd, {}}, Matrix::Ones(1, 3)), Error);
  std::mt19937_64 rng(4);
  const auto pp = Preprocessor::fit({PreprocessorKind::MeanStd, {}}, random_matrix(rng, 5, 3));
  EXPECT_THROW(pp.transform(Matrix::Ones(2, 4)), Error);
}

Matrix rank2_data(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
  const Matrix basis = random_matrix(rng, 2, p);
  const Matrix coeff = random_matrix(rng, n, 2, 3.0);
  Vector shift = random_matrix(rng, 1, p).row(0).transpose() * 10.0;
  return (coeff * basis).rowwise() + shift.transpose();
}

TEST(Pca, FindsTwoDimensionsOfRankTwoData) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix X = rank2_data(rng, 80, 63);
    const auto pp = Preprocessor::fit({PreprocessorKind::Pca, {}}, X);
    EXPECT_EQ(pp.output_dim(), 2u);
    EXPECT_EQ(pp.pca_rule(), PcaRule::Mle);
    EXPECT_LE((pp.inverse_transform(pp.transform(X)) - X).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Pca, ComponentsOrthonormalAndScoresDecorrelated) {
  std::mt19937_64 rng(6);
  Matrix X = random_matrix(rng, 200, 12);
  X = X * random_matrix(rng, 12, 12);  // correlated columns
  const auto pp = Preprocessor::fit({PreprocessorKind::Pca, 12}, X);
  const Matrix& W = pp.components();
  EXPECT_LE((W.transpose() * W - Matrix::Identity(W.cols(), W.cols())).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix Z = pp.transform(X);
  const Matrix Zc = Z.rowwise() - Z.colwise().mean();
  Matrix cov = Zc.transpose() * Zc / static_cast<double>(Z.rows() - 1);
  cov.diagonal().setZero();
  EXPECT_LE(cov.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, FullDimensionReconstructsExactly) {
  std::mt19937_64 rng(7);
  const Matrix X = random_matrix(rng, 100, 63);
  const auto pp = Preprocessor::fit({PreprocessorKind::Pca, 63}, X);
  EXPECT_EQ(pp.output_dim(), 63u);
  EXPECT_LE((pp.inverse_transform(pp.transform(X)) - X).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, ReconstructionErrorNonIncreasingInD) {
  std::mt19937_64 rng(8);
  const Matrix X = random_matrix(rng, 60, 10) * random_matrix(rng, 10, 10);
  double previous = INFINITY;
  for (std::size_t d = 0; d <= 10; ++d) {
    const auto pp = Preprocessor::fit({PreprocessorKind::Pca, d}, X);
    const double err = (pp.inverse_transform(pp.transform(X)) - X).squaredNorm();
    EXPECT_LE(err, previous * (1 + 1e-12) + 1e-12);
    previous = err;
  }
  EXPECT_LE(previous, 1e-16 * X.squaredNorm());
}

TEST(Pca, ConstantColumnsDroppedAndReinserted) {
  std::mt19937_64 rng(9);
  Matrix X = rank2_data(rng, 50, 6);
  X.col(1).setConstant(-3.5);
  const auto pp = Preprocessor::fit({PreprocessorKind::Pca, {}}, X);
  EXPECT_EQ(pp.components().rows(), 5);
  EXPECT_LE((pp.inverse_transform(pp.transform(X)) - X).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, AllConstantGivesZeroDimensions) {
  const Matrix X = Matrix::Constant(4, 5, 2.0);
  const auto pp = Preprocessor::fit({PreprocessorKind::Pca, {}}, X);
  EXPECT_EQ(pp.output_dim(), 0u);
  EXPECT_EQ(pp.transform(X).cols(), 0);
  EXPECT_EQ(pp.inverse_transform(pp.transform(X)), X);
}

TEST(Pca, FlatSpectrumFallsBackToVarianceRule) {
  // Isotropic noise: the likelihood profile is not a clean single peak or the
  // 95% rule is needed; either way the dimension stays within bounds.
  std::mt19937_64 rng(10);
  const Matrix X = random_matrix(rng, 30, 20);
  const auto pp = Preprocessor::fit({PreprocessorKind::Pca, {}}, X);
  EXPECT_GE(pp.output_dim(), 1u);
  EXPECT_LE(pp.output_dim(), 20u);
  if (pp.pca_rule() == PcaRule::VarianceFallback) {
    const Vector& s = pp.spectrum();
    const double share = s.head(static_cast<Eigen::Index>(pp.output_dim())).sum() / s.sum();
    EXPECT_GE(share, 0.95);
  }
}

TEST(Pca, LikelihoodRejectsZeroTailRank) {
  Vector s(4);
  s << 5.0, 2.0, 0.0, 0.0;
  EXPECT_TRUE(std::isfinite(pca_log_likelihood(s, 2, 10)));
  EXPECT_EQ(pca_log_likelihood(s, 3, 10), -INFINITY);
  EXPECT_GT(pca_log_likelihood(s, 2, 10), pca_log_likelihood(s, 1, 10));
}

TEST(Regressors, OlsInterpolatesLinearData) {
  std::mt19937_64 rng(11);
  const Matrix X = random_matrix(rng, 40, 5);
  Vector w(5);
  w << 1.5, -2.0, 0.25, 3.0, 0.5;
  const Vector y = (X * w).array() + 100.0;
  const auto r = Regressor::fit({RegressorKind::Ols}, X, y);
  EXPECT_FALSE(r.used_ridge_fallback());
  EXPECT_LE(regression_metrics(y, r.predict(X)).mape, 1e-9);
}

TEST(Regressors, OlsFallsBackOnSingularDesign) {
  std::mt19937_64 rng(12);
  Matrix X = random_matrix(rng, 30, 4);
  X.col(3) = X.col(0) * 2.0;  // duplicated direction
  const Vector y = (X.col(0) * 3.0 + X.col(1)).array() + 50.0;
  const auto r = Regressor::fit({RegressorKind::Ols}, X, y);
  EXPECT_TRUE(r.used_ridge_fallback());
  EXPECT_LE(regression_metrics(y, r.predict(X)).mape, 1e-9);
}

TEST(Regressors, RidgeShrinksTowardsMean) {
  std::mt19937_64 rng(13);
  const Matrix X = random_matrix(rng, 30, 3);
  const Vector y = (X.col(0) * 4.0).array() + 10.0;
  const Vector heavy = Regressor::fit({RegressorKind::Ridge, 1e9}, X, y).predict(X);
  EXPECT_LE((heavy.array() - y.mean()).abs().maxCoeff(), 1e-3);
}

TEST(Regressors, KnnOneNeighbourMemorizes) {
  std::mt19937_64 rng(14);
  const Matrix X = random_matrix(rng, 25, 4);
  const Vector y = random_matrix(rng, 25, 1).col(0);
  RegressorSpec spec{RegressorKind::Knn};
  spec.k = 1;
  const auto r = Regressor::fit(spec, X, y);
  EXPECT_EQ(r.predict(X), y);
}

TEST(Regressors, KnnTiesGoToLowerIndex) {
  Matrix X(3, 1);
  X << 0.0, 2.0, 2.0;
  Vector y(3);
  y << 1.0, 5.0, 9.0;
  RegressorSpec spec{RegressorKind::Knn};
  spec.k = 1;
  Matrix q(1, 1);
  q << 2.0;
  EXPECT_EQ(Regressor::fit(spec, X, y).predict(q)[0], 5.0);
}

struct Split {
  int feature = -1;
  double threshold = 0;
  double sse = INFINITY;
};

// Enumerates every (feature, midpoint) split and keeps the lowest squared
// error, ties resolved by lowest feature then lowest threshold.
Split brute_force_split(const Matrix& X, const Vector& y) {
  Split best;
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::vector<double> vals(X.col(f).data(), X.col(f).data() + X.rows());
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      const double t = (vals[i] + vals[i + 1]) / 2.0;
      double sl = 0, sr = 0, nl = 0, nr = 0;
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        if (X(r, f) <= t) {
          sl += y[r];
          ++nl;
        } else {
          sr += y[r];
          ++nr;
        }
      }
      double sse = 0;
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double mu = X(r, f) <= t ? sl / nl : sr / nr;
        sse += (y[r] - mu) * (y[r] - mu);
      }
      if (sse < best.sse - 1e-12) best = {static_cast<int>(f), t, sse};
    }
  }
  return best;
}

TEST(Regressors, StumpMatchesBruteForceSplit) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    // XOR-like target over two informative features plus noise features.
    Matrix X(40, 4);
    Vector y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) X(i, j) = std::round(u(rng) * 20.0) / 20.0;
      y[i] = ((X(i, 0) > 0.5) != (X(i, 1) > 0.3) ? 10.0 : 0.0) + 3.0 * X(i, 2);
    }
    RegressorSpec spec{RegressorKind::Tree};
    spec.max_depth = 1;
    const auto tree = Regressor::fit(spec, X, y);
    const Split s = brute_force_split(X, y);
    ASSERT_GE(s.feature, 0);
    double sl = 0, sr = 0, nl = 0, nr = 0;
    for (Eigen::Index r = 0; r < 40; ++r) {
      if (X(r, s.feature) <= s.threshold) {
        sl += y[r];
        ++nl;
      } else {
        sr += y[r];
        ++nr;
      }
    }
    const Vector pred = tree.predict(X);
    for (Eigen::Index r = 0; r < 40; ++r) {
      const double expected = X(r, s.feature) <= s.threshold ? sl / nl : sr / nr;
      EXPECT_NEAR(pred[r], expected, 1e-12);
    }
  }
}

TEST(Regressors, TreeRespectsMinLeafAndDepth) {
  std::mt19937_64 rng(16);
  const Matrix X = random_matrix(rng, 64, 3);
  const Vector y = X.col(0).array().square() + X.col(1).array();
  RegressorSpec spec{RegressorKind::Tree};
  spec.max_depth = 3;
  spec.min_leaf = 5;
  const Vector pred = Regressor::fit(spec, X, y).predict(X);
  std::vector<double> distinct(pred.data(), pred.data() + pred.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  EXPECT_LE(distinct.size(), 8u);
  for (double v : distinct) EXPECT_GE((pred.array() == v).count(), 5);
}

TEST(Regressors, SingleTreeForestEqualsTree) {
  std::mt19937_64 rng(17);
  const Matrix X = random_matrix(rng, 50, 5);
  const Vector y = X.col(2).array().sin() * 4.0 + X.col(0).array();
  RegressorSpec tree{RegressorKind::Tree};
  tree.max_depth = 6;
  RegressorSpec forest{RegressorKind::Forest};
  forest.max_depth = 6;
  forest.n_trees = 1;
  forest.feature_subsample = 1.0;
  forest.seed = 99;
  EXPECT_EQ(Regressor::fit(tree, X, y).predict(X), Regressor::fit(forest, X, y).predict(X));
}

TEST(Regressors, ForestDeterministicPerSeed) {
  std::mt19937_64 rng(18);
  const Matrix X = random_matrix(rng, 60, 6);
  const Vector y = X.rowwise().sum();
  RegressorSpec spec{RegressorKind::Forest};
  spec.n_trees = 10;
  spec.feature_subsample = 0.5;
  spec.seed = 3;
  const Vector a = Regressor::fit(spec, X, y).predict(X);
  EXPECT_EQ(a, Regressor::fit(spec, X, y).predict(X));
  spec.seed = 4;
  EXPECT_NE(a, Regressor::fit(spec, X, y).predict(X));
}

TEST(Regressors, ZeroColumnInputPredictsMean) {
  const Matrix X(5, 0);
  Vector y(5);
  y << 1, 2, 3, 4, 5;
  for (auto kind : {RegressorKind::Ols, RegressorKind::Ridge, RegressorKind::Knn,
                    RegressorKind::Tree, RegressorKind::Forest}) {
    RegressorSpec spec{kind};
    spec.k = 5;
    spec.n_trees = 1;  // bootstrap resampling would move the mean
    const Vector p = Regressor::fit(spec, X, y).predict(X);
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(p[i], 3.0, 1e-12) << regressor_name(kind);
  }
}

TEST(Serialization, RoundTripPredictionsIdentical) {
  std::mt19937_64 rng(19);
  const Matrix X = feature_like(rng, 40);
  const Vector y = X.col(0).array() * 2.0 + X.col(5).array();
  const Matrix probe = feature_like(rng, 15);
  for (auto pk : {PreprocessorKind::MeanStd, PreprocessorKind::MinMax, PreprocessorKind::MaxAbs,
                  PreprocessorKind::Robust, PreprocessorKind::Pca}) {
    const auto pp = Preprocessor::fit({pk, {}}, X);
    const auto pp2 = Preprocessor::from_json(nlohmann::json::parse(pp.to_json().dump()));
    EXPECT_EQ(pp.transform(probe), pp2.transform(probe));
    const Matrix Z = pp.transform(X);
    for (auto rk : {RegressorKind::Ols, RegressorKind::Ridge, RegressorKind::Knn,
                    RegressorKind::Tree, RegressorKind::Forest}) {
      RegressorSpec spec{rk};
      spec.k = 3;
      spec.lambda = 0.37;
      spec.n_trees = 4;
      spec.feature_subsample = 0.6;
      const auto r = Regressor::fit(spec, Z, y);
      const auto r2 = Regressor::from_json(nlohmann::json::parse(r.to_json().dump()));
      EXPECT_EQ(r.predict(pp.transform(probe)), r2.predict(pp2.transform(probe)));
    }
  }
}

TEST(Metrics, Basics) {
  Vector y(3);
  y << 1.0, 2.0, 3.0;
  const auto same = regression_metrics(y, y);
  EXPECT_EQ(same.mape, 0.0);
  EXPECT_EQ(same.r2, 1.0);
  Vector t(1), p(1);
  t << 100.0;
  p << 98.0;
  EXPECT_NEAR(regression_metrics(t, p).mape, 0.02, 1e-15);
  EXPECT_THROW(regression_metrics(Vector::Zero(3), y), Error);
  Vector with_zero(3), pred(3);
  with_zero << 0.0, 2.0, 4.0;
  pred << 1.0, 2.0, 5.0;
  const auto m = regression_metrics(with_zero, pred);
  EXPECT_EQ(m.zeros_excluded, 1u);
  EXPECT_NEAR(m.mape, 0.125, 1e-15);
  EXPECT_NEAR(m.max_ape, 0.25, 1e-15);
}

TEST(Metrics, MatchIndependentRecomputation) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Vector t(100), p(100);
  for (int i = 0; i < 100; ++i) {
    t[i] = u(rng);
    p[i] = t[i] * u(rng);
  }
  double mape = 0, mx = 0, mean = t.mean(), ss_res = 0, ss_tot = 0;
  for (int i = 0; i < 100; ++i) {
    const double e = std::fabs(p[i] - t[i]) / std::fabs(t[i]);
    mape += e / 100.0;
    mx = std::max(mx, e);
    ss_res += (t[i] - p[i]) * (t[i] - p[i]);
    ss_tot += (t[i] - mean) * (t[i] - mean);
  }
  const auto m = regression_metrics(t, p);
  EXPECT_NEAR(m.mape, mape, 1e-12);
  EXPECT_NEAR(m.max_ape, mx, 1e-15);
  EXPECT_NEAR(m.r2, 1 - ss_res / ss_tot, 1e-12);
  EXPECT_GE(m.mape, 0.0);
  EXPECT_LE(m.r2, 1.0);
}

}  // namespace
}  // namespace mlcomp::mlkit
