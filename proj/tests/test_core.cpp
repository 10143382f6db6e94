#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "support.hpp"
#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

using namespace utell;

// Reference outputs computed with an independent Python transcription of
// splitmix64 seeding + xoshiro256**.
TEST(Rng, MatchesReferenceStream) {
  Rng r0(0);
  EXPECT_EQ(r0(), 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(r0(), 0xbf6e1f784956452aULL);
  EXPECT_EQ(r0(), 0x1a5f849d4933e6e0ULL);
  EXPECT_EQ(r0(), 0x6aa594f1262d2d2cULL);
  Rng r42(42);
  EXPECT_EQ(r42(), 0x15780b2e0c2ec716ULL);
  EXPECT_EQ(r42(), 0x6104d9866d113a7eULL);
  EXPECT_EQ(r42(), 0xae17533239e499a1ULL);
}

TEST(Rng, UniformMatchesReference) {
  Rng r(7);
  EXPECT_DOUBLE_EQ(r.uniform(), 0.7005764821796896);
  EXPECT_DOUBLE_EQ(r.uniform(), 0.2787512294737843);
  EXPECT_DOUBLE_EQ(r.uniform(), 0.8396274618764198);
}

TEST(Rng, SplitmixAndDeriveSeed) {
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(derive_seed(1, 2, 3), 0x59730c45ea150ae8ULL);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}

TEST(Rng, BelowIsInRangeAndRoughlyUniform) {
  Rng r(3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.5);  // 6 dof, p ~ 0.001
  EXPECT_EQ(r.below(0), 0u);
  EXPECT_EQ(r.below(1), 0u);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Rng, ShuffleIsAPermutationAndDeterministic) {
  std::vector<int> a(50), b;
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(5), r2(5);
  shuffle(a, r1);
  shuffle(b, r2);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(a, sorted);
}

TEST(Matrix, ConstructionAndShapeChecks) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), DimensionError);
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.col_vector(1), (Vector{2, 5}));
  EXPECT_EQ(transpose(m), (Matrix{{1, 4}, {2, 5}, {3, 6}}));
  const std::size_t idx[] = {1, 1, 0};
  EXPECT_EQ(m.gather_rows(idx), (Matrix{{4, 5, 6}, {4, 5, 6}, {1, 2, 3}}));
  EXPECT_EQ(m.slice_rows(1, 1), (Matrix{{4, 5, 6}}));
  const Matrix parts[] = {m, Matrix{{7, 8, 9}}};
  EXPECT_EQ(vstack(parts), (Matrix{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}));
}

TEST(Matrix, ProductsAgreeWithHandValues) {
  const Matrix a{{1, 2}, {3, 4}, {5, 6}};
  const Matrix b{{7, 8, 9}, {10, 11, 12}};
  EXPECT_EQ(matmul(a, b), (Matrix{{27, 30, 33}, {61, 68, 75}, {95, 106, 117}}));
  EXPECT_EQ(matmul_tn(a, a), (Matrix{{35, 44}, {44, 56}}));
  EXPECT_EQ(matmul_nt(b, b), (Matrix{{194, 266}, {266, 365}}));
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Matrix, ProductsAgreeOnRandomShapes) {
  Rng r(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + r.below(6), k = 1 + r.below(6), m = 1 + r.below(6);
    const Matrix a = standard_normal(r, n, k), b = standard_normal(r, k, m), c = standard_normal(r, n, m);
    const Matrix ab = matmul(a, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::size_t l = 0; l < k; ++l) s += a(i, l) * b(l, j);
        EXPECT_NEAR(ab(i, j), s, 1e-12);
      }
    EXPECT_LT(max_abs(matmul_tn(a, c) - matmul(transpose(a), c)), 1e-12);
    EXPECT_LT(max_abs(matmul_nt(a, transpose(b)) - ab), 1e-12);
  }
}

TEST(Statistics, MeanAndCovarianceOfSmallSample) {
  // numpy: mean (2, 3), population covariance [[2.5, 2.25], [2.25, 2.5]]
  const Matrix x{{1, 2}, {3, 5}, {4, 4}, {0, 1}};
  const Vector mu = mean_rows(x);
  EXPECT_EQ(mu, (Vector{2, 3}));
  const Matrix q = covariance(x, mu);
  EXPECT_DOUBLE_EQ(q(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(q(0, 1), 2.25);
  EXPECT_DOUBLE_EQ(q(1, 0), 2.25);
  EXPECT_DOUBLE_EQ(q(1, 1), 2.5);
  EXPECT_THROW(mean_rows(Matrix(0, 2)), EmptyInputError);
}

TEST(SymEig, MatchesReferenceDecomposition) {
  // numpy.linalg.eigh, reordered descending
  const Matrix a{{4, 1, 0.5}, {1, 3, 0.2}, {0.5, 0.2, 2}};
  const double values[] = {4.7215700777479501, 2.3983430193369966, 1.8800869029150529};
  const double vectors[3][3] = {{-0.83886476146822531, -0.48194966042617993, -0.25304236163525462},
                                {-0.50952106520881379, 0.85879717467202876, 0.053438720828776209},
                                {-0.19155729188765619, -0.17375827344454736, 0.96597819143821095}};
  const auto e = sym_eig(a);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(e.values[i], values[i], 1e-13);
    // eigenvectors are defined up to sign
    double d = 0;
    for (std::size_t k = 0; k < 3; ++k) d += e.vectors(k, i) * vectors[k][i];
    EXPECT_NEAR(std::abs(d), 1.0, 1e-12);
  }
}

TEST(SymEig, ReconstructsRandomSymmetricMatrices) {
  Rng r(9);
  for (std::size_t d : {1, 2, 5, 16, 40}) {
    const Matrix g = standard_normal(r, d, d);
    Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) a(i, j) = g(i, j) + g(j, i);
    const auto e = sym_eig(a);
    EXPECT_TRUE(std::is_sorted(e.values.rbegin(), e.values.rend()));
    const Matrix vd = matmul(e.vectors, Matrix::diagonal(e.values));
    EXPECT_LT(max_abs(matmul_nt(vd, e.vectors) - a), 1e-10 * std::max(1.0, max_abs(a)));
    EXPECT_LT(max_abs(matmul_tn(e.vectors, e.vectors) - Matrix::identity(d)), 1e-10);
  }
}

TEST(SymEig, DiagonalAndRepeatedEigenvalues) {
  const Vector diag{1, 3, 3, 2};
  const auto e = sym_eig(Matrix::diagonal(diag));
  EXPECT_EQ(e.values, (Vector{3, 3, 2, 1}));
  const auto z = sym_eig(Matrix(3, 3));
  EXPECT_EQ(z.values, (Vector{0, 0, 0}));
}

TEST(SymEig, RejectsBadInput) {
  EXPECT_THROW(sym_eig(Matrix(2, 3)), DimensionError);
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {2.5, 1}}), SymmetryError);
  EXPECT_NO_THROW(sym_eig(Matrix{{1, 2}, {2 + 1e-12, 1}}));
}

TEST(SymEig, ClampRaisesSmallEigenvalues) {
  Vector v{2.0, 1e-12, -3e-9};
  clamp_eigenvalues(v, 1e-8);
  EXPECT_EQ(v, (Vector{2.0, 2e-8, 2e-8}));
  Vector z{0.0, -1.0};
  clamp_eigenvalues(z, 1e-8);
  EXPECT_EQ(z, (Vector{1e-8, 1e-8}));
}
