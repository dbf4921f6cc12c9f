#include "spsel/similarity.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spsel/error.hpp"
#include "test_util.hpp"

namespace {

using spsel::DistanceMetric;
using spsel::Matrix;
using spsel::MetricKind;
using spsel::testing::random_matrix;

DistanceMetric metric(MetricKind kind) {
  DistanceMetric m;
  m.kind = kind;
  return m;
}

// Columns rescaled to zero mean and unit (n - 1) variance.
Matrix whiten_columns(Matrix e) {
  const std::size_t n = e.rows();
  for (std::size_t c = 0; c < e.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += e(r, c);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (e(r, c) - mean) * (e(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    for (std::size_t r = 0; r < n; ++r) e(r, c) = (e(r, c) - mean) / sd;
  }
  return e;
}

double gram_error(const Matrix& z, const Matrix& s) { return spsel::squared_frobenius_norm(matmul_nt(z, z) - s); }

TEST(Distance, PythagoreanAndManhattan) {
  const Matrix e = Matrix::from_rows({{0, 0}, {3, 4}});
  EXPECT_DOUBLE_EQ(pairwise_distance(e, metric(MetricKind::euclidean))(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(pairwise_distance(e, metric(MetricKind::manhattan))(1, 0), 7.0);
}

TEST(Distance, DiagonalMahalanobisOnWhitenedDataIsEuclidean) {
  std::mt19937_64 rng(4);
  const Matrix e = whiten_columns(random_matrix(20, 6, rng));
  DistanceMetric mah = metric(MetricKind::mahalanobis);
  mah.mah_regularization = 0.0;
  const Matrix a = pairwise_distance(e, mah);
  const Matrix b = pairwise_distance(e, metric(MetricKind::euclidean));
  EXPECT_LT(spsel::testing::max_abs_diff(a, b), 1e-9);
}

TEST(Distance, FullMahalanobisMatchesQuadraticForm) {
  std::mt19937_64 rng(8);
  const Matrix e = random_matrix(30, 4, rng);
  DistanceMetric mah = metric(MetricKind::mahalanobis);
  mah.mah_mode = spsel::CovarianceMode::full;
  mah.mah_regularization = 0.1;
  const Matrix d = pairwise_distance(e, mah);

  Matrix cov = spsel::sample_covariance(e);
  for (std::size_t i = 0; i < 4; ++i) cov(i, i) += 0.1;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      Matrix diff(4, 1);
      for (std::size_t c = 0; c < 4; ++c) diff(c, 0) = e(i, c) - e(j, c);
      const Matrix sol = spsel::solve_spd(cov, diff);
      const double q = matmul_tn(diff, sol)(0, 0);
      EXPECT_NEAR(d(i, j), std::sqrt(q), 1e-9);
    }
  }
}

TEST(Distance, DefaultMahalanobisRidge) {
  const Matrix cov = Matrix::from_rows({{2, 0}, {0, 4}});
  EXPECT_DOUBLE_EQ(spsel::default_mah_regularization(cov), 1e-3 * 3.0);
}

TEST(Distance, MetricAxioms) {
  std::mt19937_64 rng(17);
  const Matrix e = random_matrix(12, 5, rng);
  for (auto kind : {MetricKind::euclidean, MetricKind::manhattan, MetricKind::mahalanobis}) {
    const Matrix d = pairwise_distance(e, metric(kind));
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_EQ(d(i, i), 0.0);
      for (std::size_t j = 0; j < 12; ++j) {
        EXPECT_EQ(d(i, j), d(j, i));
        EXPECT_GE(d(i, j), 0.0);
        for (std::size_t k = 0; k < 12; ++k) EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12);
      }
    }
  }
}

TEST(Distance, Errors) {
  EXPECT_THROW(pairwise_distance(Matrix(1, 3), metric(MetricKind::euclidean)), spsel::InputError);
  // Two identical points: the unregularized full covariance is singular.
  DistanceMetric mah = metric(MetricKind::mahalanobis);
  mah.mah_mode = spsel::CovarianceMode::full;
  mah.mah_regularization = 0.0;
  EXPECT_THROW(pairwise_distance(Matrix::from_rows({{1, 2}, {1, 2}}), mah), spsel::DefinitenessError);
  EXPECT_THROW(spsel::parse_metric_kind("cosine"), spsel::InputError);
}

TEST(Similarity, KernelAtSigmaRootTwo) {
  const double sigma = 1.5;
  Matrix d(2, 2);
  d(0, 1) = d(1, 0) = sigma * std::sqrt(2.0);
  const auto s = spsel::similarity_from_distance(d, sigma);
  EXPECT_NEAR(s.s(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_EQ(s.s(0, 0), 1.0);
  EXPECT_EQ(s.bandwidth, sigma);
}

TEST(Similarity, MedianBandwidthThreePoints) {
  const Matrix pts = Matrix::from_rows({{0}, {1}, {3}});
  const Matrix d = pairwise_distance(pts, metric(MetricKind::euclidean));
  const auto s = spsel::similarity_from_distance(d);
  EXPECT_DOUBLE_EQ(s.bandwidth, 2.0);
  EXPECT_DOUBLE_EQ(s.s(0, 1), std::exp(-1.0 / 8.0));
  EXPECT_DOUBLE_EQ(s.s(1, 2), std::exp(-4.0 / 8.0));
  EXPECT_DOUBLE_EQ(s.s(0, 2), std::exp(-9.0 / 8.0));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.s(i, i), 1.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s.s(i, j), s.s(j, i));
  }
}

TEST(Similarity, Errors) {
  EXPECT_THROW(spsel::similarity_from_distance(Matrix(3, 3)), spsel::DegenerateInputError);
  EXPECT_THROW(spsel::similarity_from_distance(Matrix(2, 3)), spsel::ShapeError);
  Matrix neg(2, 2);
  neg(0, 1) = neg(1, 0) = -1.0;
  EXPECT_THROW(spsel::similarity_from_distance(neg), spsel::InputError);
}

TEST(Spectral, IdentityFullRank) {
  const auto t = spsel::spectral_target(Matrix::identity(5), 5);
  EXPECT_LT(gram_error(t.z, Matrix::identity(5)), 1e-16);
  EXPECT_EQ(t.discarded_energy, 0.0);
}

TEST(Spectral, DiagonalTopOne) {
  const std::vector<double> d{4, 1, 0};
  const auto t = spsel::spectral_target(Matrix::diagonal(d), 1);
  ASSERT_EQ(t.z.cols(), 1u);
  EXPECT_DOUBLE_EQ(std::abs(t.z(0, 0)), 2.0);
  EXPECT_EQ(t.z(1, 0), 0.0);
  EXPECT_EQ(t.z(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.discarded_energy, 1.0);
}

TEST(Spectral, DiscardedEnergyMatchesResidual) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_matrix(6, 6, rng);
    const Matrix s = matmul_nt(m, m);
    const auto t = spsel::spectral_target(s, 2);
    const auto e = spsel::eig_sym(s);
    double tail = 0.0;
    for (std::size_t i = 2; i < 6; ++i) tail += e.values[i] * e.values[i];
    EXPECT_NEAR(gram_error(t.z, s), tail, 1e-8);
    EXPECT_NEAR(t.discarded_energy, tail, 1e-8);
    for (std::size_t j = 0; j < 2; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 6; ++i) col += t.z(i, j) * t.z(i, j);
      EXPECT_NEAR(col, t.kept_eigenvalues[j], 1e-8);
    }
  }
}

TEST(Spectral, BeatsRandomCandidates) {
  std::mt19937_64 rng(77);
  for (std::size_t n = 3; n <= 8; ++n) {
    const Matrix m = random_matrix(n, n, rng);
    const Matrix s = matmul_nt(m, m);
    for (std::size_t h = 1; h <= n; h += 2) {
      const double best = gram_error(spsel::spectral_target(s, h).z, s);
      for (int c = 0; c < 200; ++c) {
        EXPECT_LE(best, gram_error(random_matrix(n, h, rng), s) + 1e-9);
      }
    }
  }
}

TEST(Spectral, PermutationEquivariance) {
  std::mt19937_64 rng(13);
  const Matrix e = random_matrix(9, 3, rng);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix ep(9, 3);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 3; ++c) ep(i, c) = e(perm[i], c);

  const auto dm = metric(MetricKind::euclidean);
  const auto a = spsel::spectral_target(spsel::similarity_from_distance(pairwise_distance(e, dm)), 3);
  const auto b = spsel::spectral_target(spsel::similarity_from_distance(pairwise_distance(ep, dm)), 3);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.kept_eigenvalues[j], b.kept_eigenvalues[j], 1e-10);
  // Gram matrices are sign-free.
  const Matrix ga = matmul_nt(a.z, a.z);
  const Matrix gb = matmul_nt(b.z, b.z);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(gb(i, j), ga(perm[i], perm[j]), 1e-9);
}

TEST(Spectral, Errors) {
  const std::vector<double> d{1, -1};
  EXPECT_THROW(spsel::spectral_target(Matrix::diagonal(d), 2), spsel::SpectrumError);
  EXPECT_THROW(spsel::spectral_target(Matrix::identity(3), 4), spsel::InputError);
  EXPECT_THROW(spsel::spectral_target(Matrix::identity(3), 0), spsel::InputError);
  // A tiny negative eigenvalue is clamped, not rejected.
  const std::vector<double> tiny{1, -1e-14};
  const auto t = spsel::spectral_target(Matrix::diagonal(tiny), 2);
  EXPECT_EQ(t.kept_eigenvalues[1], 0.0);
}

}  // namespace
