#pragma once

// Regenerates synthetic task data from stored signatures: de-whitened latent
// samples per cluster, decoded by the task's own decoder, tagged with the task
// id as pseudo label.

#include <cstddef>
#include <vector>

#include "utell/expert.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"
#include "utell/signature.hpp"
#include "utell/vae.hpp"

namespace utell {

struct GeneratedSet {
  std::size_t task_id = 0;
  Matrix latent;                      // N x d
  Matrix data;                        // N x input_dim
  std::vector<std::size_t> pseudo_labels;  // all equal to task_id
  std::size_t rejected_batches = 0;   // batches redrawn by the structure check
};

struct GenerateOptions {
  /// A cluster's batch is redrawn while its structure loss exceeds threshold * batch size.
  double struct_threshold = 0.0;
  std::size_t max_retries = 5;
};

/// N split evenly over the clusters, remainder to the lowest cluster ids.
inline std::vector<std::size_t> split_counts(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> out(parts, parts ? n / parts : 0);
  for (std::size_t i = 0; i < (parts ? n % parts : 0); ++i) ++out[i];
  return out;
}

inline GeneratedSet generate(const ExpertStore& store, std::size_t task_id, std::size_t n, Rng& rng,
                             const GenerateOptions& opts = {}) {
  const TaskExpert& e = store.at(task_id);
  const auto& sigs = e.signatures();
  const auto& centers = e.kmeans().centers;
  const auto counts = split_counts(n, sigs.size());

  std::vector<Matrix> parts;
  GeneratedSet out;
  out.task_id = task_id;
  for (std::size_t s = 0; s < sigs.size(); ++s) {
    if (counts[s] == 0) continue;
    const auto& sig = sigs[s];
    // per-task signatures stand for every cluster, so nothing is foreign
    Matrix own(0, centers.cols()), foreign(0, centers.cols());
    if (sigs.size() == centers.rows()) {
      std::vector<std::size_t> own_id{sig.cluster_id}, other;
      for (std::size_t r = 0; r < centers.rows(); ++r)
        if (r != sig.cluster_id) other.push_back(r);
      own = centers.gather_rows(own_id);
      foreign = centers.gather_rows(other);
    }
    Matrix z = signature::sample_structured(sig, counts[s], rng);
    if (foreign.rows() > 0) {
      const double limit = opts.struct_threshold * static_cast<double>(counts[s]);
      for (std::size_t attempt = 0;
           attempt < opts.max_retries && signature::struct_loss(own, foreign, z) > limit; ++attempt) {
        z = signature::sample_structured(sig, counts[s], rng);
        ++out.rejected_batches;
      }
    }
    parts.push_back(std::move(z));
  }
  out.latent = parts.empty() ? Matrix(0, e.params().latent_dim) : vstack(parts);
  out.data = out.latent.rows() ? vae::decode(e.params(), out.latent) : Matrix(0, e.params().input_dim);
  out.pseudo_labels.assign(out.latent.rows(), task_id);
  return out;
}

}  // namespace utell
