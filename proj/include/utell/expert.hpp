#pragma once

// A task expert bundles a beta-VAE, a k-means model over its latent space and
// one latent signature per cluster. Experts are frozen once trained; the store
// only ever appends.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "utell/clustering.hpp"
#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"
#include "utell/signature.hpp"
#include "utell/vae.hpp"

namespace utell {

enum class SignatureGranularity { cluster, task };

struct ExpertConfig {
  vae::Architecture arch;
  vae::TrainConfig train{30, 32, 1e-2, 0.9, 0, 10.0};
  std::size_t clusters = 2;
  std::size_t kmeans_max_iter = 300;
  std::size_t kmeans_restarts = 10;
  SignatureGranularity granularity = SignatureGranularity::cluster;
  double eig_tol = 1e-8;
};

class TaskExpert {
public:
  TaskExpert(std::size_t task_id, vae::Params params) : task_id_(task_id), params_(std::move(params)) {}

  /// Reassembles a finalized expert, e.g. from disk.
  static TaskExpert restore(std::size_t task_id, vae::Params params, clustering::KMeansModel kmeans,
                            std::vector<signature::LatentSignature> signatures) {
    TaskExpert e(task_id, std::move(params));
    e.kmeans_ = std::move(kmeans);
    e.signatures_ = std::move(signatures);
    e.frozen_ = true;
    return e;
  }

  std::size_t task_id() const noexcept { return task_id_; }
  bool frozen() const noexcept { return frozen_; }
  const vae::Params& params() const noexcept { return params_; }
  const clustering::KMeansModel& kmeans() const noexcept { return kmeans_; }
  const std::vector<signature::LatentSignature>& signatures() const noexcept { return signatures_; }
  const std::vector<double>& loss_trace() const noexcept { return loss_trace_; }

  friend bool operator==(const TaskExpert& a, const TaskExpert& b) {
    return a.task_id_ == b.task_id_ && a.frozen_ == b.frozen_ && a.params_ == b.params_ && a.kmeans_ == b.kmeans_ &&
           a.signatures_ == b.signatures_;
  }

private:
  friend TaskExpert train_expert(TaskExpert, const Matrix&, const ExpertConfig&, Rng&);

  std::size_t task_id_;
  bool frozen_ = false;
  vae::Params params_;
  clustering::KMeansModel kmeans_;
  std::vector<signature::LatentSignature> signatures_;
  std::vector<double> loss_trace_;
};

namespace detail {

inline bool same_architecture(const vae::Params& p, const vae::Architecture& a) {
  auto widths = [](const Mlp& m) {
    std::vector<std::size_t> w;
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) w.push_back(m.layers[l].fan_out());
    return w;
  };
  return p.input_dim == a.input_dim && p.latent_dim == a.latent_dim && widths(p.encoder) == a.encoder_hidden &&
         widths(p.decoder) == a.decoder_hidden;
}

}  // namespace detail

/// Untrained expert for `task_id`. Parameters are copied from `prev` when given,
/// otherwise drawn fresh.
inline TaskExpert new_expert(std::size_t task_id, const TaskExpert* prev, const ExpertConfig& cfg, Rng& rng) {
  if (prev) {
    if (!detail::same_architecture(prev->params(), cfg.arch))
      throw DimensionError("new_expert: configuration does not match the previous expert's shapes");
    vae::Params p = prev->params();
    p.beta = cfg.arch.beta;
    p.reconstruction = cfg.arch.reconstruction;
    return TaskExpert(task_id, std::move(p));
  }
  return TaskExpert(task_id, vae::init_params(cfg.arch, rng));
}

/// Latent representation used for clustering: the posterior mean.
inline Matrix latent_of(const TaskExpert& e, const Matrix& x) { return vae::encode(e.params(), x).mean; }

namespace detail {

inline std::vector<signature::LatentSignature> extract_all(std::size_t task_id, const Matrix& z,
                                                           const clustering::KMeansModel& km,
                                                           std::span<const std::size_t> assignment,
                                                           const ExpertConfig& cfg) {
  std::vector<signature::LatentSignature> sigs;
  if (cfg.granularity == SignatureGranularity::task) {
    sigs.push_back(signature::extract_signature(z, task_id, 0, cfg.eig_tol));
    return sigs;
  }
  std::optional<Matrix> pooled_q;
  for (std::size_t r = 0; r < km.cluster_count(); ++r) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == r) members.push_back(i);
    const Matrix zr = z.gather_rows(members);
    try {
      sigs.push_back(signature::extract_signature(zr, task_id, r, cfg.eig_tol));
    } catch (const DegenerateClusterError&) {
      // pooled task covariance around the cluster's own mean
      if (!pooled_q) pooled_q = covariance(z, mean_rows(z));
      Vector mu = members.empty() ? km.centers.row_vector(r) : mean_rows(zr);
      sigs.push_back(signature::from_covariance(std::move(mu), *pooled_q, task_id, r, cfg.eig_tol));
    }
  }
  return sigs;
}

}  // namespace detail

/// Trains the VAE on X, clusters the posterior means and extracts signatures.
/// The returned expert is frozen.
inline TaskExpert train_expert(TaskExpert expert, const Matrix& x, const ExpertConfig& cfg, Rng& rng) {
  if (expert.frozen_) throw FrozenExpertError("expert for task " + std::to_string(expert.task_id_) + " is frozen");
  if (x.rows() == 0) throw EmptyInputError("train_expert: no samples");
  auto trained = vae::train(std::move(expert.params_), x, cfg.train, rng);
  expert.params_ = std::move(trained.params);
  expert.loss_trace_ = std::move(trained.loss_trace);

  const Matrix z = latent_of(expert, x);
  auto fit = clustering::kmeans_fit(z, cfg.clusters, cfg.kmeans_max_iter, rng(), cfg.kmeans_restarts);
  expert.signatures_ = detail::extract_all(expert.task_id_, z, fit.model, fit.assignments, cfg);
  expert.kmeans_ = std::move(fit.model);
  expert.frozen_ = true;
  return expert;
}

/// Cluster ids of X under the expert's encoder and k-means block.
inline std::vector<std::size_t> expert_predict(const TaskExpert& e, const Matrix& x) {
  if (!e.frozen()) throw FrozenExpertError("expert_predict: expert is not trained");
  if (x.rows() == 0) return {};
  return clustering::assign(e.kmeans(), latent_of(e, x));
}

/// Class labels via a fitted cluster -> label map.
inline std::vector<int> expert_predict_labels(const TaskExpert& e, const Matrix& x,
                                              const clustering::ClusterLabelMap& map) {
  if (map.empty()) throw Error("expert_predict_labels: label map not fitted");
  const auto ids = expert_predict(e, x);
  std::vector<int> labels(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) labels[i] = map(ids[i]);
  return labels;
}

/// Append-only, ordered collection of frozen experts with task ids 1..k.
class ExpertStore {
public:
  void append(TaskExpert e) {
    if (!e.frozen()) throw FrozenExpertError("ExpertStore: only finalized experts can be stored");
    if (e.task_id() != experts_.size() + 1)
      throw UnknownTaskError("ExpertStore: expected task id " + std::to_string(experts_.size() + 1) + ", got " +
                             std::to_string(e.task_id()));
    experts_.push_back(std::move(e));
  }

  std::size_t size() const noexcept { return experts_.size(); }
  bool empty() const noexcept { return experts_.empty(); }

  const TaskExpert& at(std::size_t task_id) const {
    if (task_id == 0 || task_id > experts_.size()) throw UnknownTaskError("unknown task id " + std::to_string(task_id));
    return experts_[task_id - 1];
  }
  const TaskExpert& back() const { return experts_.back(); }

  auto begin() const noexcept { return experts_.begin(); }
  auto end() const noexcept { return experts_.end(); }

private:
  std::vector<TaskExpert> experts_;
};

}  // namespace utell
