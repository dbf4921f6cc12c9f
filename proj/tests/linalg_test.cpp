#include "spsel/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spsel/error.hpp"
#include "test_util.hpp"

namespace {

using spsel::Matrix;
using spsel::testing::max_abs_diff;
using spsel::testing::random_matrix;
using spsel::testing::random_spd;

TEST(Matrix, RejectsBadData) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), spsel::ShapeError);
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1, NAN}), spsel::InputError);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), spsel::ShapeError);
}

TEST(Matrix, Products) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const Matrix b = Matrix::from_rows({{1, 0, 2}, {0, 1, -1}});
  const Matrix ab = matmul(a, b);
  EXPECT_EQ(ab, Matrix::from_rows({{1, 2, 0}, {3, 4, 2}, {5, 6, 4}}));
  EXPECT_EQ(matmul_tn(a, a), matmul(transpose(a), a));
  EXPECT_EQ(matmul_nt(a, a), matmul(a, transpose(a)));
  EXPECT_THROW(matmul(a, a), spsel::ShapeError);
  EXPECT_THROW(a + b, spsel::ShapeError);
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::from_rows({{3, 4}})), 5.0);
}

TEST(EigSym, Identity) {
  const auto e = spsel::eig_sym(Matrix::identity(4));
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_EQ(e.vectors, Matrix::identity(4));
}

TEST(EigSym, DiagonalIsSortedDescending) {
  const std::vector<double> d{4, 1, 0};
  const auto e = spsel::eig_sym(Matrix::diagonal(d));
  EXPECT_EQ(e.values, (std::vector<double>{4, 1, 0}));
  EXPECT_EQ(e.vectors, Matrix::identity(3));

  const std::vector<double> shuffled{1, 0, 4};
  const auto s = spsel::eig_sym(Matrix::diagonal(shuffled));
  EXPECT_EQ(s.values, (std::vector<double>{4, 1, 0}));
  EXPECT_DOUBLE_EQ(s.vectors(2, 0), 1.0);
}

TEST(EigSym, ReconstructsRandomSymmetric) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_matrix(8, 8, rng);
    const Matrix a = 0.5 * (m + transpose(m));
    const auto e = spsel::eig_sym(a);

    Matrix vd = e.vectors;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) vd(i, j) *= e.values[j];
    const Matrix back = matmul_nt(vd, e.vectors);
    EXPECT_LT(frobenius_norm(back - a), 1e-10 * frobenius_norm(a));

    EXPECT_LT(max_abs_diff(matmul_tn(e.vectors, e.vectors), Matrix::identity(8)), 1e-12);

    // Vᵀ A V is diagonal.
    const Matrix t = matmul_tn(e.vectors, matmul(a, e.vectors));
    double off = 0.0;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        if (i != j) off += t(i, j) * t(i, j);
    EXPECT_LT(std::sqrt(off), 1e-10 * frobenius_norm(a));

    for (std::size_t i = 1; i < 8; ++i) EXPECT_GE(e.values[i - 1], e.values[i]);
  }
}

TEST(EigSym, SignConvention) {
  std::mt19937_64 rng(5);
  const Matrix a = random_spd(6, rng);
  const auto e = spsel::eig_sym(a);
  for (std::size_t j = 0; j < 6; ++j) {
    double best = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      if (std::abs(e.vectors(i, j)) > std::abs(best)) best = e.vectors(i, j);
    EXPECT_GT(best, 0.0);
  }
}

TEST(EigSym, Deterministic) {
  std::mt19937_64 rng(3);
  const Matrix a = random_spd(12, rng);
  const auto x = spsel::eig_sym(a);
  const auto y = spsel::eig_sym(a);
  EXPECT_EQ(x.values, y.values);
  EXPECT_EQ(x.vectors, y.vectors);
}

TEST(EigSym, Errors) {
  EXPECT_THROW(spsel::eig_sym(Matrix(2, 3)), spsel::ShapeError);
  EXPECT_THROW(spsel::eig_sym(Matrix::from_rows({{1, 2}, {0, 1}})), spsel::ShapeError);
}

TEST(SolveSpd, Diagonal) {
  const Matrix a = Matrix::from_rows({{2, 0}, {0, 4}});
  const Matrix x = spsel::solve_spd(a, Matrix::from_rows({{2}, {4}}));
  EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(x(1, 0), 1.0);
}

TEST(SolveSpd, IdentityReturnsRhs) {
  std::mt19937_64 rng(2);
  const Matrix b = random_matrix(5, 2, rng);
  EXPECT_EQ(spsel::solve_spd(Matrix::identity(5), b), b);
}

TEST(SolveSpd, RecoversKnownSolution) {
  std::mt19937_64 rng(9);
  const Matrix a = random_spd(7, rng);
  const Matrix x0 = random_matrix(7, 2, rng);
  const Matrix x = spsel::solve_spd(a, matmul(a, x0));
  EXPECT_LT(frobenius_norm(x - x0), 1e-7 * frobenius_norm(x0));
}

TEST(SolveSpd, RandomResidual) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_spd(10, rng);
    const Matrix b = random_matrix(10, 3, rng);
    const Matrix x = spsel::solve_spd(a, b);
    EXPECT_LT(frobenius_norm(matmul(a, x) - b), 1e-10 * frobenius_norm(b));
  }
}

TEST(SolveSpd, IndefiniteReportsPivot) {
  const Matrix a = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, -1}});
  try {
    spsel::cholesky(a);
    FAIL() << "expected DefinitenessError";
  } catch (const spsel::DefinitenessError& e) {
    EXPECT_EQ(e.pivot(), 2u);
  }
  EXPECT_THROW(spsel::solve_spd(Matrix::identity(2), Matrix(3, 1)), spsel::ShapeError);
}

}  // namespace
