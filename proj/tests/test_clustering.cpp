#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "utell/clustering.hpp"
#include "utell/error.hpp"

using namespace utell;
using namespace utell::clustering;

TEST(KMeans, NearestBreaksTiesTowardsLowestId) {
  const KMeansModel m{Matrix{{-1, 0}, {1, 0}, {-1, 0}}};
  const Vector origin{0, 0};
  EXPECT_EQ(nearest(m, origin), 0u);
  const Vector right{0.9, 0};
  double d2 = 0;
  EXPECT_EQ(nearest(m, right, &d2), 1u);
  EXPECT_NEAR(d2, 0.01, 1e-15);
}

TEST(KMeans, LossOnHandExample) {
  const KMeansModel m{Matrix{{0, 0}, {10, 0}}};
  const Matrix z{{1, 0}, {0, 2}, {9, 0}, {12, 1}};
  // nearest: 0, 0, 1, 1 -> 1 + 4 + 1 + 5
  EXPECT_DOUBLE_EQ(cluster_loss(m, z), 11.0);
  const std::size_t wrong[] = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(cluster_loss(m, z, wrong), 81 + 104 + 81 + 145);
  EXPECT_THROW(cluster_loss(m, Matrix(1, 3)), DimensionError);
}

TEST(KMeans, SeparatedBlobsAreRecovered) {
  Rng rng(1);
  Matrix z(60, 2);
  for (std::size_t i = 0; i < 60; ++i) {
    const double cx = i < 20 ? 0.0 : (i < 40 ? 10.0 : -10.0);
    z(i, 0) = cx + 0.3 * rng.normal();
    z(i, 1) = (i < 40 ? 0.0 : 10.0) + 0.3 * rng.normal();
  }
  const auto fit = kmeans_fit(z, 3, 100, 42, 3);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(fit.assignments[i], fit.assignments[(i / 20) * 20]);
  EXPECT_NE(fit.assignments[0], fit.assignments[20]);
  EXPECT_NE(fit.assignments[20], fit.assignments[40]);
  EXPECT_NE(fit.assignments[0], fit.assignments[40]);
  EXPECT_DOUBLE_EQ(fit.inertia, cluster_loss(fit.model, z));
}

TEST(KMeans, InertiaNeverIncreases) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix z = standard_normal(rng, 40, 3);
    const auto fit = kmeans_fit(z, 4, 50, rng(), 1);
    for (std::size_t i = 1; i < fit.inertia_trace.size(); ++i)
      EXPECT_LE(fit.inertia_trace[i], fit.inertia_trace[i - 1] * (1 + 1e-12));
  }
}

TEST(KMeans, MatchesBruteForceOnSmallInstances) {
  Rng rng(3);
  int optimal = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + rng.below(6);
    const Matrix z = standard_normal(rng, n, 2);
    const auto fit = kmeans_fit(z, 2, 100, rng(), 5);
    const double best = test::brute_force_inertia_2(z);
    EXPECT_GE(fit.inertia, best - 1e-9);
    optimal += fit.inertia <= best + 1e-9;
  }
  EXPECT_GE(optimal, 38);
}

TEST(KMeans, DeterministicForSeed) {
  Rng rng(4);
  const Matrix z = standard_normal(rng, 50, 4);
  const auto a = kmeans_fit(z, 3, 100, 9, 2), b = kmeans_fit(z, 3, 100, 9, 2);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.assignments, b.assignments);
}

TEST(KMeans, DuplicatePointsAndErrors) {
  const Matrix same(5, 2, 1.0);
  const auto fit = kmeans_fit(same, 2, 10, 1);
  EXPECT_EQ(fit.inertia, 0.0);
  EXPECT_THROW(kmeans_fit(Matrix(1, 2), 2, 10, 1), InsufficientSamplesError);
  EXPECT_THROW(kmeans_fit(Matrix(3, 2), 0, 10, 1), ConfigError);
}

TEST(LabelMap, MajorityVoteAndEmptyClusters) {
  const KMeansModel m{Matrix{{0.0}, {10.0}, {100.0}}};
  const Matrix z{{0.1}, {0.2}, {-0.1}, {9.5}, {10.5}};
  const std::vector<int> labels{3, 3, 5, 7, 5};
  const auto map = fit_label_map(m, z, labels);
  EXPECT_EQ(map(0), 3);
  EXPECT_EQ(map(1), 5);  // tie 5/7, smaller label
  EXPECT_EQ(map(2), 3);  // empty cluster: global majority
  EXPECT_THROW(fit_label_map(m, Matrix(0, 1), std::vector<int>{}), EmptyInputError);
  EXPECT_THROW(fit_label_map(m, z, std::vector<int>{1}), DimensionError);
}
