// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "gq/linalg.hpp"
#include "support.hpp"

using namespace gq;
using gq::test::error_code_of;

TEST_CASE("matrix construction rejects non-finite entries and bad lengths") {
  CHECK(error_code_of([] { Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}); }) == ErrorCode::NonFinite);
  CHECK(error_code_of([] { Matrix(1, 2, {1.0, INFINITY}); }) == ErrorCode::NonFinite);
  CHECK(error_code_of([] { Matrix(2, 2, {1.0, 2.0, 3.0}); }) == ErrorCode::DimensionMismatch);
  const Matrix M{{1, 2, 3}, {4, 5, 6}};
  CHECK(M.rows() == 2);
  CHECK(M.cols() == 3);
  CHECK(M(1, 2) == 6.0);
  CHECK(M.col(1) == Vector{2, 5});
}

TEST_CASE("cholesky of the identity is the identity") {
  const CholeskyFactor f = cholesky(Matrix::identity(3), 0.0);
  CHECK(f.L == Matrix::identity(3));
}

TEST_CASE("cholesky of a 2x2 SPD matrix matches the hand factorization") {
  const CholeskyFactor f = cholesky(Matrix{{4, 2}, {2, 3}}, 0.0);
  CHECK(f.L(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f.L(0, 1) == 0.0);
  CHECK(f.L(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.L(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  const Matrix LLt = matmul(f.L, transpose(f.L));
  CHECK(relative_error(LLt, Matrix{{4, 2}, {2, 3}}) <= 1e-15);
}

TEST_CASE("damping makes a singular matrix factorizable with only diagonal deviation") {
  const Matrix H{{1, 1}, {1, 1}};
  CHECK(error_code_of([&] { cholesky(H, 0.0); }) == ErrorCode::NotPositiveDefinite);
  const CholeskyFactor f = cholesky(H, 1e-7);
  CHECK(f.damping == 1e-7);
  const Matrix D = subtract(matmul(f.L, transpose(f.L)), H);
  CHECK(std::abs(D(0, 1)) <= 1e-15);
  CHECK(std::abs(D(1, 0)) <= 1e-15);
  CHECK(D(0, 0) == doctest::Approx(1e-7).epsilon(1e-6));
  CHECK(D(1, 1) == doctest::Approx(1e-7).epsilon(1e-6));
}

TEST_CASE("cholesky rejects non-square input and yields a lower-triangular factor") {
  CHECK(error_code_of([] { cholesky(Matrix(2, 3), 0.0); }) == ErrorCode::DimensionMismatch);
  Rng rng(5);
  Matrix A = test::random_matrix(9, 6, rng);
  const CholeskyFactor f = cholesky(weighted_gram(A), 1e-3);
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(f.L(r, r) > 0.0);
    for (std::size_t c = r + 1; c < 6; ++c) CHECK(f.L(r, c) == 0.0);
  }
}

TEST_CASE("least squares small cases") {
  CHECK(least_squares(Matrix::identity(2), Vector{3, 5}) == Vector{3, 5});
  const Vector x = least_squares(Matrix{{1}, {1}}, Vector{1, 3});
  REQUIRE(x.size() == 1);
  CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(error_code_of([] { least_squares(Matrix(1, 2), Vector{1}); }) == ErrorCode::DimensionMismatch);
  CHECK(error_code_of([] { least_squares(Matrix(3, 2), Vector{1}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("least squares agrees with the normal equations on random 8x3 systems") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Matrix A = test::random_matrix(8, 3, rng);
    Vector b(8);
    for (double& v : b) v = rng.normal();
    const Vector x = least_squares(A, b);
    // Normal equations through an independent Cholesky solve.
    const Matrix AtA = matmul(transpose(A), A);
    const Vector Atb = matvec_transposed(A, b);
    const CholeskyFactor f = cholesky(AtA, 0.0);
    Vector y(3), z(3);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = Atb[i];
      for (std::size_t k = 0; k < i; ++k) s -= f.L(i, k) * y[k];
      y[i] = s / f.L(i, i);
    }
    for (std::size_t i = 3; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < 3; ++k) s -= f.L(k, i) * z[k];
      z[i] = s / f.L(i, i);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x[i] - z[i]) <= 1e-9 * (1.0 + std::abs(z[i])));
  }
}

TEST_CASE("least squares with a rank-deficient column returns a minimizer") {
  // Duplicate columns: any split of the coefficient is optimal.
  const Matrix A{{1, 1}, {2, 2}, {3, 3}};
  const Vector b{1, 2, 4};
  const Vector x = least_squares(A, b);
  const Vector Ax = matvec(A, x);
  // Optimal fit of b onto (1,2,3): coefficient 17/14.
  CHECK(Ax[0] == doctest::Approx(17.0 / 14.0).epsilon(1e-12));
  CHECK(Ax[2] == doctest::Approx(51.0 / 14.0).epsilon(1e-12));
}

TEST_CASE("quadratic forms") {
  CHECK(quad_form(Matrix::identity(2), Vector{3, 4}) == 25.0);
  CHECK(quad_form(Matrix{{2, 1}, {1, 2}}, Vector{1, 1}) == 6.0);
  CHECK(quad_form(Matrix{{2, 1}, {1, 2}}, Vector{0, 0}) == 0.0);
  CHECK(error_code_of([] { quad_form(Matrix::identity(2), Vector{1}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("weighted gram matches explicit sums") {
  const Matrix X{{1, 2}, {3, 4}};
  CHECK(weighted_gram(X) == Matrix{{10, 14}, {14, 20}});
  const Vector w{2, 0.5};
  const Matrix G = weighted_gram(X, w);
  CHECK(G(0, 0) == 2 * 1 + 0.5 * 9);
  CHECK(G(0, 1) == 2 * 2 + 0.5 * 12);
  CHECK(G(1, 0) == G(0, 1));
  CHECK(G(1, 1) == 2 * 4 + 0.5 * 16);
}

TEST_CASE("small helpers") {
  const Matrix A{{1, -5}, {2, 3}};
  CHECK(max_abs(A) == 5.0);
  CHECK(frobenius_norm(A) == doctest::Approx(std::sqrt(39.0)));
  CHECK(mean_diagonal(A) == 2.0);
  CHECK(add_diagonal(A, 1.0) == Matrix{{2, -5}, {2, 4}});
  CHECK(!is_symmetric(A, 1e-12));
  CHECK(is_symmetric(Matrix{{1, 2}, {2, 1}}, 1e-12));
  CHECK(dot(Vector{1, 2}, Vector{3, 4}) == 11.0);
  CHECK(matvec(A, Vector{1, 1}) == Vector{-4, 5});
  CHECK(matvec_transposed(A, Vector{1, 1}) == Vector{3, -2});
  CHECK(transpose(A) == Matrix{{1, 2}, {-5, 3}});
}
