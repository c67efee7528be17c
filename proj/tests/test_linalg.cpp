#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "depthflow/linalg.hpp"
#include "depthflow/rng.hpp"

using namespace depthflow;
using la::Complex;
using la::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.normal();
  return m;
}

template <class T>
double reconstruction_error(const la::BasicMatrix<T>& m, const la::Svd<T>& s) {
  la::BasicMatrix<T> us = s.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= s.sigma[k];
  return la::frobenius_norm(us * s.v.adjoint() - m) / std::max(1e-300, la::frobenius_norm(m));
}

template <class T>
double orthonormality_error(const la::BasicMatrix<T>& q) {
  const auto g = q.adjoint() * q;
  double e = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) e = std::max(e, std::abs(g(i, j) - T(i == j ? 1.0 : 0.0)));
  return e;
}

}  // namespace

TEST(Svd, IdentityHasUnitSingularValues) {
  const auto s = la::svd(Matrix::identity(3));
  EXPECT_EQ(s.sigma, (la::Vector{1, 1, 1}));
}

TEST(Svd, DiagonalRecoversEntriesAndIdentityFactors) {
  const Matrix d{{3, 0, 0}, {0, 2, 0}, {0, 0, 1}};
  const auto s = la::svd(d);
  EXPECT_EQ(s.sigma, (la::Vector{3, 2, 1}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(std::abs(s.u(i, j)), i == j ? 1.0 : 0.0, 1e-15);
      EXPECT_NEAR(std::abs(s.v(i, j)), i == j ? 1.0 : 0.0, 1e-15);
    }
}

TEST(Svd, RandomTallAndWideReconstruct) {
  Rng rng(1);
  for (auto [r, c] : {std::pair{8, 5}, std::pair{5, 8}, std::pair{1, 6}, std::pair{7, 1}}) {
    const Matrix m = random_matrix(r, c, rng);
    const auto s = la::svd(m);
    EXPECT_LT(reconstruction_error(m, s), 1e-10);
    EXPECT_LT(orthonormality_error(s.u), 1e-10);
    EXPECT_LT(orthonormality_error(s.v), 1e-10);
    EXPECT_TRUE(std::is_sorted(s.sigma.rbegin(), s.sigma.rend()));
  }
}

TEST(Svd, RankDeficientKeepsOrthonormalU) {
  Rng rng(2);
  const Matrix a = random_matrix(6, 2, rng);
  const Matrix m = a * random_matrix(2, 4, rng);
  const auto s = la::svd(m);
  EXPECT_LT(s.sigma[2], 1e-12 * s.sigma[0]);
  EXPECT_LT(reconstruction_error(m, s), 1e-10);
  EXPECT_LT(orthonormality_error(s.u), 1e-10);
}

TEST(Svd, ComplexInput) {
  Rng rng(3);
  la::ComplexMatrix m(5, 3);
  for (auto& z : m.data()) z = Complex(rng.normal(), rng.normal());
  const auto s = la::svd(m);
  EXPECT_LT(reconstruction_error(m, s), 1e-10);
  EXPECT_LT(orthonormality_error(s.u), 1e-10);
}

TEST(Svd, RejectsNonFinite) {
  Matrix m(2, 2, 1.0);
  m(0, 1) = NAN;
  EXPECT_THROW(la::svd(m), DataError);
}

TEST(Svd, IterationCapIsReported) {
  Rng rng(4);
  EXPECT_THROW(la::svd(random_matrix(6, 6, rng), 1), NumericalError);
}

TEST(Pinv, InvertibleMatchesClosedForm) {
  const Matrix a{{4, 7}, {2, 6}};
  const double det = 4 * 6 - 7 * 2;
  const Matrix inv{{6 / det, -7 / det}, {-2 / det, 4 / det}};
  const auto p = la::pinv(a);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(p(i, j), inv(i, j), 1e-10);
}

TEST(Pinv, ZeroMatrixGivesZero) {
  const auto p = la::pinv(Matrix(3, 2));
  EXPECT_EQ(p.rows(), 2u);
  for (double x : p.data()) EXPECT_EQ(x, 0.0);
}

TEST(Pinv, RankOneOuterProduct) {
  const la::Vector u{1, 2, -1}, v{3, 0.5};
  Matrix m(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) m(i, j) = u[i] * v[j];
  const double scale = la::dot(u, u) * la::dot(v, v);
  const auto p = la::pinv(m);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p(i, j), v[i] * u[j] / scale, 1e-12);
}

TEST(Pinv, MoorePenroseConditions) {
  Rng rng(5);
  const Matrix m = random_matrix(7, 3, rng) * random_matrix(3, 5, rng);
  const auto p = la::pinv(m, 1e-10);
  EXPECT_LT(la::frobenius_norm(m * p * m - m), 1e-8);
  EXPECT_LT(la::frobenius_norm(p * m * p - p), 1e-8);
  const auto mp = m * p, pm = p * m;
  EXPECT_LT(la::frobenius_norm(mp - mp.transpose()), 1e-8);
  EXPECT_LT(la::frobenius_norm(pm - pm.transpose()), 1e-8);
}

TEST(Pinv, NegativeToleranceIsUsageError) { EXPECT_THROW(la::pinv(Matrix::identity(2), -1.0), UsageError); }

TEST(Eig, RotationHasUnitModulusPair) {
  const double th = std::numbers::pi / 4;
  const Matrix r{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
  const auto e = la::eig_general(r);
  ASSERT_EQ(e.values.size(), 2u);
  EXPECT_NEAR(e.values[0].real(), std::cos(th), 1e-12);
  EXPECT_NEAR(e.values[0].imag(), std::sin(th), 1e-12);
  EXPECT_NEAR(e.values[1].imag(), -std::sin(th), 1e-12);
}

TEST(Eig, DiagonalSortedByModulus) {
  const auto e = la::eig_general(Matrix{{0.5, 0}, {0, 0.9}});
  EXPECT_NEAR(e.values[0].real(), 0.9, 1e-14);
  EXPECT_NEAR(e.values[1].real(), 0.5, 1e-14);
  EXPECT_EQ(e.values[0].imag(), 0.0);
}

TEST(Eig, CompanionDoubleRoot) {
  // z^2 - z + 0.25 = (z - 0.5)^2
  const Matrix c{{1, -0.25}, {1, 0}};
  const auto e = la::eig_general(c);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(std::abs(e.values[k] - Complex(0.5, 0)), 0.0, 1e-7);
    la::ComplexVector w = e.vectors.column(k);
    const auto cw = la::to_complex(c) * w;
    double res = 0.0;
    for (std::size_t i = 0; i < 2; ++i) res += std::norm(cw[i] - e.values[k] * w[i]);
    EXPECT_LE(std::sqrt(res), 1e-8 * la::norm2(std::span<const Complex>(w)));
  }
}

TEST(Eig, ResidualOnRandomDiagonalizable) {
  Rng rng(6);
  for (std::size_t n : {3u, 7u, 16u, 40u}) {
    Matrix p = random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) p(i, i) += 3.0;
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = rng.uniform(-1.5, 1.5);
    const Matrix a = p * d * la::pinv(p);
    const auto e = la::eig_general(a);
    const auto ac = la::to_complex(a);
    for (std::size_t k = 0; k < n; ++k) {
      la::ComplexVector w = e.vectors.column(k);
      const auto aw = ac * w;
      double res = 0.0;
      for (std::size_t i = 0; i < n; ++i) res += std::norm(aw[i] - e.values[k] * w[i]);
      EXPECT_LE(std::sqrt(res), 1e-8 * std::max(1.0, la::frobenius_norm(a)));
    }
    for (std::size_t k = 1; k < n; ++k) EXPECT_GE(std::abs(e.values[k - 1]) + 1e-12, std::abs(e.values[k]));
  }
}

TEST(Eig, RejectsNonSquareAndOversized) {
  EXPECT_THROW(la::eig_general(Matrix(2, 3)), UsageError);
  EXPECT_THROW(la::eig_general(Matrix::identity(65)), UsageError);
}

TEST(NumericalRank, CountsAboveRelativeTolerance) {
  const la::Vector s{10, 1, 1e-8, 1e-12};
  EXPECT_EQ(la::numerical_rank(s, 1e-10), 3u);
  EXPECT_EQ(la::numerical_rank(la::Vector{0, 0}, 1e-10), 0u);
}
