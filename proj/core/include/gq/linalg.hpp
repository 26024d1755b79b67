// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gq {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Constructing from explicit data validates that every entry is finite;
/// the shape-only constructor zero-fills.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Lower-triangular factor with L * L^T = H + damping * I.
struct CholeskyFactor {
  Matrix L;
  double damping = 0.0;
};

CholeskyFactor cholesky(const Matrix& H, double damping);

/// Minimizer of ||A x - b||_2 via Householder QR with column pivoting.
/// Rank-deficient systems get the basic solution (zeros on dropped columns).
Vector least_squares(const Matrix& A, std::span<const double> b);

/// v^T H v
double quad_form(const Matrix& H, std::span<const double> v);

// Small dense helpers shared across modules.
Matrix matmul(const Matrix& A, const Matrix& B);
Matrix transpose(const Matrix& A);
/// A^T * Diag(weights) * A; weights may be empty meaning all ones.
Matrix weighted_gram(const Matrix& A, std::span<const double> weights = {});
Vector matvec(const Matrix& A, std::span<const double> x);
Vector matvec_transposed(const Matrix& A, std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& A);
double max_abs(const Matrix& A);
Matrix subtract(const Matrix& A, const Matrix& B);
Matrix add_diagonal(const Matrix& A, double value);
double mean_diagonal(const Matrix& A);
bool is_symmetric(const Matrix& A, double rel_tol);

/// ||A - B||_F / max(||B||_F, tiny)
double relative_error(const Matrix& A, const Matrix& B);

}  // namespace gq
