#pragma once

// Lloyd's k-means with k-means++ seeding, the within-cluster squared-distance
// loss, and the majority-vote cluster -> class map used at evaluation time.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell::clustering {

struct KMeansModel {
  Matrix centers;  // R x d

  std::size_t cluster_count() const noexcept { return centers.rows(); }
  std::size_t dim() const noexcept { return centers.cols(); }

  friend bool operator==(const KMeansModel&, const KMeansModel&) = default;
};

/// Nearest center by Euclidean distance; ties go to the lowest cluster id.
inline std::size_t nearest(const KMeansModel& m, std::span<const double> z, double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < m.cluster_count(); ++r) {
    const double d = squared_distance(z, m.centers.row(r));
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

inline std::vector<std::size_t> assign(const KMeansModel& m, const Matrix& z) {
  if (z.rows() > 0 && z.cols() != m.dim()) throw DimensionError("assign: dimension mismatch");
  std::vector<std::size_t> ids(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) ids[i] = nearest(m, z.row(i));
  return ids;
}

/// Sum over points of the squared distance to the center they are assigned to.
inline double cluster_loss(const KMeansModel& m, const Matrix& z, std::span<const std::size_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) s += squared_distance(z.row(i), m.centers.row(assignment[i]));
  return s;
}

/// Loss under the nearest-center assignment rule.
inline double cluster_loss(const KMeansModel& m, const Matrix& z) {
  if (z.rows() > 0 && z.cols() != m.dim()) throw DimensionError("cluster_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double d2;
    nearest(m, z.row(i), &d2);
    s += d2;
  }
  return s;
}

struct KMeansFit {
  KMeansModel model;
  std::vector<std::size_t> assignments;
  std::vector<double> inertia_trace;  // loss after every assignment and every update step
  std::size_t iterations = 0;
  double inertia = 0.0;
};

namespace detail {

inline Matrix plus_plus_seeds(const Matrix& z, std::size_t k, Rng& rng) {
  const std::size_t n = z.rows();
  Matrix centers(k, z.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(z.row(pick).begin(), z.row(pick).end(), centers.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(z.row(i), centers.row(c)));
      total += d2[i];
    }
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.below(n));
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

inline KMeansFit lloyd(const Matrix& z, Matrix centers, std::size_t max_iter) {
  KMeansFit fit;
  fit.model.centers = std::move(centers);
  fit.assignments = assign(fit.model, z);
  fit.inertia_trace.push_back(cluster_loss(fit.model, z, fit.assignments));
  const std::size_t k = fit.model.cluster_count();
  const std::size_t d = z.cols();
  for (std::size_t it = 0; it < max_iter; ++it) {
    // update: centers move to their cluster means; empty clusters keep their center
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto s = sums.row(fit.assignments[i]);
      const auto zi = z.row(i);
      for (std::size_t c = 0; c < d; ++c) s[c] += zi[c];
      ++counts[fit.assignments[i]];
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (counts[r] == 0) continue;
      auto c = fit.model.centers.row(r);
      const auto s = sums.row(r);
      for (std::size_t j = 0; j < d; ++j) c[j] = s[j] / static_cast<double>(counts[r]);
    }
    fit.inertia_trace.push_back(cluster_loss(fit.model, z, fit.assignments));
    ++fit.iterations;

    auto next = assign(fit.model, z);
    const bool fixpoint = next == fit.assignments;
    fit.assignments = std::move(next);
    fit.inertia_trace.push_back(cluster_loss(fit.model, z, fit.assignments));
    if (fixpoint) break;
  }
  fit.inertia = fit.inertia_trace.back();
  return fit;
}

}  // namespace detail

/// Fits R clusters. With n_init > 1 the lowest-inertia restart wins (first one on ties).
inline KMeansFit kmeans_fit(const Matrix& z, std::size_t clusters, std::size_t max_iter, std::uint64_t seed,
                            std::size_t n_init = 1) {
  if (clusters == 0) throw ConfigError("kmeans_fit: need at least one cluster");
  if (z.rows() < clusters)
    throw InsufficientSamplesError("kmeans_fit: " + std::to_string(z.rows()) + " samples for " +
                                   std::to_string(clusters) + " clusters");
  KMeansFit best;
  for (std::size_t run = 0; run < std::max<std::size_t>(1, n_init); ++run) {
    Rng rng(derive_seed(seed, 0x6b6d, run));
    auto fit = detail::lloyd(z, detail::plus_plus_seeds(z, clusters, rng), max_iter);
    if (run == 0 || fit.inertia < best.inertia) best = std::move(fit);
  }
  return best;
}

/// cluster id -> class label, fitted on labelled evaluation data only.
struct ClusterLabelMap {
  std::vector<int> labels;

  int operator()(std::size_t cluster) const { return labels.at(cluster); }
  bool empty() const noexcept { return labels.empty(); }

  friend bool operator==(const ClusterLabelMap&, const ClusterLabelMap&) = default;
};

/// Majority label per cluster (smallest label on ties); empty clusters take the
/// most frequent label overall.
inline ClusterLabelMap fit_label_map(const KMeansModel& m, const Matrix& z, std::span<const int> labels) {
  if (z.rows() == 0) throw EmptyInputError("fit_label_map: empty mapping set");
  if (labels.size() != z.rows()) throw DimensionError("fit_label_map: label count mismatch");
  const auto ids = assign(m, z);
  std::vector<std::map<int, std::size_t>> votes(m.cluster_count());
  std::map<int, std::size_t> global;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ++votes[ids[i]][labels[i]];
    ++global[labels[i]];
  }
  auto majority = [](const std::map<int, std::size_t>& counts) {
    int best = counts.begin()->first;
    std::size_t best_n = 0;
    for (const auto& [label, n] : counts)
      if (n > best_n) {
        best = label;
        best_n = n;
      }
    return best;
  };
  const int fallback = majority(global);
  ClusterLabelMap map;
  map.labels.reserve(votes.size());
  for (const auto& v : votes) map.labels.push_back(v.empty() ? fallback : majority(v));
  return map;
}

}  // namespace utell::clustering
