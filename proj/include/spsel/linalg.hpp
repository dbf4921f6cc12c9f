#pragma once

// Dense row-major matrices with the handful of kernels the selector needs:
// products, a cyclic Jacobi symmetric eigensolver and a Cholesky SPD solver.

#include <cstddef>
#include <span>
#include <vector>

namespace spsel {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of row-major data; throws ShapeError on a length mismatch
  // and InputError on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  std::vector<double> column(std::size_t c) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double frobenius_norm(const Matrix& a);
double squared_frobenius_norm(const Matrix& a);
double l2_norm(std::span<const double> v);

struct EigenPairs {
  std::vector<double> values;  // non-increasing
  Matrix vectors;              // column i pairs with values[i]
};

// Symmetric eigendecomposition by cyclic Jacobi sweeps. Eigenvector signs are
// fixed so the largest-magnitude component (first one on ties) is positive.
EigenPairs eig_sym(const Matrix& a);

// Lower-triangular Cholesky factor; throws DefinitenessError with the pivot.
Matrix cholesky(const Matrix& a);

// Solves A·X = B for symmetric positive-definite A.
Matrix solve_spd(const Matrix& a, const Matrix& b);

}  // namespace spsel
