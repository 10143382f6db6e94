#pragma once

// Task routing. The cross-entropy assigner is a small softmax classifier
// trained on generated samples labelled with their task id; the cosine
// assigner scores each task by summed cosine similarity between its mean
// generated sample and the test samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "utell/dense.hpp"
#include "utell/error.hpp"
#include "utell/generator.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell::assigner {

/// Row-wise softmax, shifted by the row max.
inline Matrix softmax(Matrix logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (auto& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (auto& v : row) v /= s;
  }
  return logits;
}

/// Mean over samples of -log p[label].
inline double cross_entropy(const Matrix& probs, std::span<const std::size_t> labels) {
  double s = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) s -= std::log(std::max(probs(r, labels[r]), 1e-300));
  return s / static_cast<double>(probs.rows());
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());  // first maximum
}

struct CeConfig {
  std::size_t hidden = 128;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double momentum = 0.9;
};

struct CeModel {
  Mlp net;                 // input -> hidden -> tasks, logits
  std::size_t tasks = 1;   // output j routes to task j + 1
  bool identity = false;   // single-task router, always task 1
  std::string warning;

  std::size_t input_dim() const { return identity ? 0 : net.input_dim(); }

  friend bool operator==(const CeModel& a, const CeModel& b) {
    return a.net == b.net && a.tasks == b.tasks && a.identity == b.identity;
  }
};

inline Matrix predict_proba(const CeModel& m, const Matrix& x) {
  if (m.identity) return Matrix(x.rows(), 1, 1.0);
  if (x.cols() != m.net.input_dim()) throw DimensionError("assigner: input dimension mismatch");
  return softmax(m.net.forward(x));
}

/// Task id (1-based) per sample, first maximum wins.
inline std::vector<std::size_t> ta_ce_route(const CeModel& m, const Matrix& x) {
  std::vector<std::size_t> ids(x.rows(), 1);
  if (m.identity) return ids;
  const Matrix p = predict_proba(m, x);
  for (std::size_t r = 0; r < p.rows(); ++r) ids[r] = argmax(p.row(r)) + 1;
  return ids;
}

/// Trains on the union of the generated sets; the target of each sample is its pseudo label.
inline CeModel train_ta_ce(std::span<const GeneratedSet> sets, const CeConfig& cfg, Rng& rng) {
  CeModel model;
  if (sets.size() < 2) {
    model.identity = true;
    model.tasks = sets.size();
    model.warning = "single task: routing is trivial, identity router returned";
    return model;
  }
  std::vector<Matrix> parts;
  std::vector<std::size_t> targets;
  for (const auto& s : sets) {
    if (s.data.rows() == 0) throw EmptyInputError("train_ta_ce: empty generated set for task " + std::to_string(s.task_id));
    parts.push_back(s.data);
    for (auto t : s.pseudo_labels) {
      if (t == 0 || t > sets.size()) throw UnknownTaskError("train_ta_ce: pseudo label out of range");
      targets.push_back(t - 1);
    }
  }
  const Matrix x = vstack(parts);
  const std::size_t k = sets.size();
  const std::size_t widths[] = {x.cols(), cfg.hidden, k};
  model.net = Mlp::create(widths, Activation::tanh, Activation::identity, rng);
  model.tasks = k;

  SgdMomentum opt(cfg.lr, cfg.momentum);
  std::vector<std::size_t> order(x.rows());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto idx = std::span(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
      const Matrix batch = x.gather_rows(idx);
      const auto acts = model.net.forward_cached(batch);
      Matrix g = softmax(acts.back());
      const double inv_n = 1.0 / static_cast<double>(idx.size());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        g(r, targets[idx[r]]) -= 1.0;
        for (auto& v : g.row(r)) v *= inv_n;
      }
      Mlp grads = model.net.zeros_like();
      model.net.backward(acts, std::move(g), grads);
      auto ps = model.net.parameter_spans();
      auto gs = grads.parameter_spans();
      opt.step(ps, gs);
    }
    if (!model.net.all_finite()) throw TrainingError(e, "task assigner parameters became non-finite");
  }
  return model;
}

enum class CosineMode { mean_sample, pairwise };

/// Reference data kept for cosine routing: the mean generated sample per task,
/// plus the full sets when pairwise scoring is requested.
struct CosineModel {
  CosineMode mode = CosineMode::mean_sample;
  std::vector<Vector> prototypes;  // task t at index t - 1
  std::vector<Matrix> sets;        // only for pairwise mode

  std::size_t tasks() const noexcept { return prototypes.size(); }

  friend bool operator==(const CosineModel&, const CosineModel&) = default;
};

inline CosineModel build_cosine(std::span<const GeneratedSet> sets, CosineMode mode = CosineMode::mean_sample) {
  CosineModel m;
  m.mode = mode;
  for (const auto& s : sets) {
    if (s.data.rows() == 0) throw EmptyInputError("build_cosine: empty generated set");
    m.prototypes.push_back(mean_rows(s.data));
    if (mode == CosineMode::pairwise) m.sets.push_back(s.data);
  }
  return m;
}

/// Cosine similarity, 0 when either vector has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

struct SuitabilityReport {
  std::vector<double> scores;  // task t at index t - 1
  std::size_t chosen = 1;      // argmax, lowest task id on ties
};

/// Suitability of each task for a batch of test samples.
inline SuitabilityReport suitability(const CosineModel& m, const Matrix& x_test) {
  if (x_test.rows() == 0) throw EmptyInputError("suitability: empty test batch");
  if (m.prototypes.empty()) throw EmptyInputError("suitability: no tasks");
  SuitabilityReport rep;
  rep.scores.assign(m.tasks(), 0.0);
  for (std::size_t t = 0; t < m.tasks(); ++t) {
    if (m.prototypes[t].size() != x_test.cols()) throw DimensionError("suitability: dimension mismatch");
    double score = 0.0;
    for (std::size_t l = 0; l < x_test.rows(); ++l) {
      if (m.mode == CosineMode::mean_sample) {
        score += cosine(m.prototypes[t], x_test.row(l));
      } else {
        const Matrix& set = m.sets[t];
        double s = 0.0;
        for (std::size_t j = 0; j < set.rows(); ++j) s += cosine(set.row(j), x_test.row(l));
        score += s / static_cast<double>(set.rows());
      }
    }
    rep.scores[t] = score;
  }
  rep.chosen = argmax(rep.scores) + 1;
  return rep;
}

/// Convenience: suitability straight from generated sets.
inline SuitabilityReport suitability(std::span<const GeneratedSet> sets, const Matrix& x_test,
                                     CosineMode mode = CosineMode::mean_sample) {
  return suitability(build_cosine(sets, mode), x_test);
}

/// Routes consecutive batches of `batch` samples; every sample in a batch gets the batch's task.
inline std::vector<std::size_t> ta_cos_route(const CosineModel& m, const Matrix& x, std::size_t batch) {
  std::vector<std::size_t> ids(x.rows(), 1);
  const std::size_t step = std::max<std::size_t>(1, batch);
  for (std::size_t start = 0; start < x.rows(); start += step) {
    const std::size_t count = std::min(step, x.rows() - start);
    const auto chosen = suitability(m, x.slice_rows(start, count)).chosen;
    std::fill_n(ids.begin() + static_cast<std::ptrdiff_t>(start), count, chosen);
  }
  return ids;
}

}  // namespace utell::assigner
