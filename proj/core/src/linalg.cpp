// SPDX-License-Identifier: Apache-2.0
#include "gq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gq/error.hpp"

namespace gq {

namespace {

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "matrix entry is not finite");
  }
}

std::string shape(const Matrix& A) {
  return std::to_string(A.rows()) + "x" + std::to_string(A.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorCode::DimensionMismatch, "matrix data length " + std::to_string(data_.size()) +
                                           " != " + std::to_string(rows) + "x" +
                                           std::to_string(cols));
  }
  check_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorCode::DimensionMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  check_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix I(n, n);
  for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

Vector Matrix::col(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) fail(ErrorCode::DimensionMismatch, "set_col length");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

CholeskyFactor cholesky(const Matrix& H, double damping) {
  if (H.rows() != H.cols()) fail(ErrorCode::DimensionMismatch, "cholesky needs square, got " + shape(H));
  if (!(damping >= 0.0)) fail(ErrorCode::InvalidSize, "damping must be >= 0");
  const std::size_t d = H.rows();
  Matrix L(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double pivot = H(j, j) + damping;
    for (std::size_t k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
    if (!(pivot > 0.0)) {
      fail(ErrorCode::NotPositiveDefinite,
           "pivot " + std::to_string(pivot) + " at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(pivot);
    L(j, j) = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = H(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / ljj;
    }
  }
  return {std::move(L), damping};
}

Vector least_squares(const Matrix& A, std::span<const double> b) {
  const std::size_t n = A.rows();
  const std::size_t k = A.cols();
  if (b.size() != n) fail(ErrorCode::DimensionMismatch, "least_squares rhs length");
  if (n < k) fail(ErrorCode::DimensionMismatch, "least_squares needs rows >= cols, got " + shape(A));

  Matrix R = A;
  Vector rhs(b.begin(), b.end());
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  Vector col_norm2(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < n; ++r) col_norm2[c] += R(r, c) * R(r, c);
  }
  double max_norm = 0.0;
  for (double v : col_norm2) max_norm = std::max(max_norm, std::sqrt(v));
  const double tol = static_cast<double>(std::max(n, k)) *
                     std::numeric_limits<double>::epsilon() * std::max(max_norm, 1e-300);

  std::size_t rank = 0;
  Vector v(n);
  for (std::size_t j = 0; j < k; ++j) {
    // Pivot on the largest remaining column norm (recomputed exactly; k is small here).
    std::size_t best = j;
    double best_norm = -1.0;
    for (std::size_t c = j; c < k; ++c) {
      double s = 0.0;
      for (std::size_t r = j; r < n; ++r) s += R(r, c) * R(r, c);
      if (s > best_norm) {
        best_norm = s;
        best = c;
      }
    }
    if (std::sqrt(best_norm) <= tol) break;
    if (best != j) {
      for (std::size_t r = 0; r < n; ++r) std::swap(R(r, j), R(r, best));
      std::swap(perm[j], perm[best]);
    }

    double alpha = std::sqrt(best_norm);
    if (R(j, j) > 0) alpha = -alpha;
    for (std::size_t r = 0; r < n; ++r) v[r] = r < j ? 0.0 : R(r, j);
    v[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t r = j; r < n; ++r) vnorm2 += v[r] * v[r];
    if (vnorm2 > 0.0) {
      for (std::size_t c = j; c < k; ++c) {
        double s = 0.0;
        for (std::size_t r = j; r < n; ++r) s += v[r] * R(r, c);
        const double f = 2.0 * s / vnorm2;
        for (std::size_t r = j; r < n; ++r) R(r, c) -= f * v[r];
      }
      double s = 0.0;
      for (std::size_t r = j; r < n; ++r) s += v[r] * rhs[r];
      const double f = 2.0 * s / vnorm2;
      for (std::size_t r = j; r < n; ++r) rhs[r] -= f * v[r];
    }
    ++rank;
  }

  Vector z(k, 0.0);
  for (std::size_t jj = rank; jj-- > 0;) {
    double s = rhs[jj];
    for (std::size_t c = jj + 1; c < rank; ++c) s -= R(jj, c) * z[c];
    z[jj] = s / R(jj, jj);
  }
  Vector x(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) x[perm[c]] = z[c];
  return x;
}

double quad_form(const Matrix& H, std::span<const double> v) {
  if (H.rows() != H.cols() || H.rows() != v.size()) {
    fail(ErrorCode::DimensionMismatch, "quad_form: H " + shape(H) + ", v " + std::to_string(v.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) continue;
    total += v[i] * dot(H.row(i), v);
  }
  return total;
}

Matrix matmul(const Matrix& A, const Matrix& B) {
  if (A.cols() != B.rows()) fail(ErrorCode::DimensionMismatch, "matmul " + shape(A) + " * " + shape(B));
  Matrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto crow = C.row(i);
    for (std::size_t k = 0; k < A.cols(); ++k) {
      const double a = A(i, k);
      if (a == 0.0) continue;
      auto brow = B.row(k);
      for (std::size_t j = 0; j < B.cols(); ++j) crow[j] += a * brow[j];
    }
  }
  return C;
}

Matrix transpose(const Matrix& A) {
  Matrix T(A.cols(), A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
  return T;
}

Matrix weighted_gram(const Matrix& A, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != A.rows()) {
    fail(ErrorCode::DimensionMismatch, "weighted_gram weight length");
  }
  const std::size_t d = A.cols();
  Matrix G(d, d);
  // Accumulate sample by sample in index order so the result does not depend
  // on how callers split work.
  for (std::size_t s = 0; s < A.rows(); ++s) {
    const double w = weights.empty() ? 1.0 : weights[s];
    if (w == 0.0) continue;
    auto x = A.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      const double wi = w * x[i];
      if (wi == 0.0) continue;
      auto grow = G.row(i);
      for (std::size_t j = i; j < d; ++j) grow[j] += wi * x[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) G(i, j) = G(j, i);
  return G;
}

Vector matvec(const Matrix& A, std::span<const double> x) {
  if (A.cols() != x.size()) fail(ErrorCode::DimensionMismatch, "matvec");
  Vector y(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) y[i] = dot(A.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& A, std::span<const double> x) {
  if (A.rows() != x.size()) fail(ErrorCode::DimensionMismatch, "matvec_transposed");
  Vector y(A.cols(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto r = A.row(i);
    for (std::size_t j = 0; j < A.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix& A) {
  double s = 0.0;
  for (double v : A.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& A) {
  double m = 0.0;
  for (double v : A.data()) m = std::max(m, std::abs(v));
  return m;
}

Matrix subtract(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    fail(ErrorCode::DimensionMismatch, "subtract " + shape(A) + " - " + shape(B));
  }
  Matrix C = A;
  auto c = C.data();
  auto b = B.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return C;
}

Matrix add_diagonal(const Matrix& A, double value) {
  if (A.rows() != A.cols()) fail(ErrorCode::DimensionMismatch, "add_diagonal needs square");
  Matrix C = A;
  for (std::size_t i = 0; i < C.rows(); ++i) C(i, i) += value;
  return C;
}

double mean_diagonal(const Matrix& A) {
  if (A.rows() != A.cols()) fail(ErrorCode::DimensionMismatch, "mean_diagonal needs square");
  if (A.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) s += A(i, i);
  return s / static_cast<double>(A.rows());
}

bool is_symmetric(const Matrix& A, double rel_tol) {
  if (A.rows() != A.cols()) return false;
  const double scale = std::max(max_abs(A), 1e-300);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(A(i, j) - A(j, i)) > rel_tol * scale) return false;
  return true;
}

double relative_error(const Matrix& A, const Matrix& B) {
  return frobenius_norm(subtract(A, B)) / std::max(frobenius_norm(B), 1e-300);
}

}  // namespace gq
