#pragma once

// Latent Gaussian signatures of a cluster: mean, covariance eigenvalues and
// eigenvectors. They are the only memory kept of a task; synthetic latents are
// drawn from them by de-whitening standard normal noise.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell::signature {

struct LatentSignature {
  std::size_t task_id = 0;
  std::size_t cluster_id = 0;
  Vector mean;      // d
  Vector eigvals;   // d, descending, clamped positive
  Matrix eigvecs;   // d x d, column i pairs with eigvals[i]

  std::size_t dim() const noexcept { return mean.size(); }

  /// Number of stored values: mean + eigenvalues + eigenvectors.
  std::size_t value_count() const noexcept { return 2 * dim() + dim() * dim(); }

  friend bool operator==(const LatentSignature&, const LatentSignature&) = default;
};

/// Builds a signature from an explicit mean and covariance.
inline LatentSignature from_covariance(Vector mean, const Matrix& q, std::size_t task_id, std::size_t cluster_id,
                                       double eig_tol = 1e-8) {
  if (q.rows() != mean.size() || q.cols() != mean.size()) throw DimensionError("signature: covariance shape mismatch");
  auto eig = sym_eig(q);
  clamp_eigenvalues(eig.values, eig_tol);
  return {task_id, cluster_id, std::move(mean), std::move(eig.values), std::move(eig.vectors)};
}

/// Mean and 1/N covariance of one cluster's latent samples, eigendecomposed.
inline LatentSignature extract_signature(const Matrix& z_cluster, std::size_t task_id, std::size_t cluster_id,
                                         double eig_tol = 1e-8) {
  if (z_cluster.rows() < 2)
    throw DegenerateClusterError("cluster " + std::to_string(cluster_id) + " of task " + std::to_string(task_id) +
                                 " has " + std::to_string(z_cluster.rows()) + " sample(s)");
  Vector mu = mean_rows(z_cluster);
  const Matrix q = covariance(z_cluster, mu);
  return from_covariance(std::move(mu), q, task_id, cluster_id, eig_tol);
}

/// V diag(D) V^T
inline Matrix covariance_of(const LatentSignature& sig) {
  const std::size_t d = sig.dim();
  Matrix vd = sig.eigvecs;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) vd(r, c) *= sig.eigvals[c];
  Matrix q = matmul_nt(vd, sig.eigvecs);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) q(j, i) = q(i, j);
  return q;
}

/// F = V D^{-1/2}, so that F^T Q F = I.
inline Matrix whitening_factor(const LatentSignature& sig) {
  Matrix f = sig.eigvecs;
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c) f(r, c) /= std::sqrt(sig.eigvals[c]);
  return f;
}

/// V D^{1/2}, the inverse of F^T. Maps white noise onto covariance Q.
inline Matrix dewhitening_factor(const LatentSignature& sig) {
  Matrix g = sig.eigvecs;
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) *= std::sqrt(sig.eigvals[c]);
  return g;
}

/// N latent samples: Z = S (V D^{1/2})^T + mean, with S standard normal (N x d).
inline Matrix sample_structured(const LatentSignature& sig, std::size_t n, Rng& rng) {
  if (n == 0) return Matrix(0, sig.dim());
  const Matrix s = standard_normal(rng, n, sig.dim());
  Matrix z = matmul_nt(s, dewhitening_factor(sig));
  add_row_vector(z, sig.mean);
  return z;
}

/// Sum over samples of (distance to own centers - distance to foreign centers).
/// Euclidean distance; negative when samples sit nearer their own clusters.
inline double struct_loss(const Matrix& own_centers, const Matrix& foreign_centers, const Matrix& z) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto zi = z.row(i);
    for (std::size_t r = 0; r < own_centers.rows(); ++r) total += std::sqrt(squared_distance(zi, own_centers.row(r)));
    for (std::size_t r = 0; r < foreign_centers.rows(); ++r)
      total -= std::sqrt(squared_distance(zi, foreign_centers.row(r)));
  }
  return total;
}

/// Signature memory for k tasks with n_k signatures each: 2 d k n_k + d^2 k n_k values.
struct MemoryEstimate {
  std::size_t values = 0;
  std::size_t bytes = 0;     // at 4 bytes per value
  double megabytes = 0.0;    // bytes / 1e6
};

inline MemoryEstimate memory_estimate(std::size_t d, std::size_t tasks, std::size_t clusters_per_task) {
  if (d == 0 || tasks == 0 || clusters_per_task == 0) throw ConfigError("memory_estimate: arguments must be positive");
  MemoryEstimate m;
  m.values = 2 * d * tasks * clusters_per_task + d * d * tasks * clusters_per_task;
  m.bytes = 4 * m.values;
  m.megabytes = static_cast<double>(m.bytes) / 1e6;
  return m;
}

}  // namespace utell::signature
