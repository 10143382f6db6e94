#pragma once

// Task streams. Class-IL tasks hold disjoint class sets; Domain-IL tasks share
// all classes under a per-task drift (rotation, pixel permutation or, for the
// synthetic source, a mean shift).
//
// Training code only ever sees TaskData::train. Labels live in TaskData::eval
// and are consumed by evaluation alone.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "utell/error.hpp"
#include "utell/idx.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell::streams {

enum class Scenario { class_il, domain_il };

struct EvalData {
  std::vector<int> train_labels;  // parallel to TaskData::train, reporting only
  Matrix test;
  std::vector<int> test_labels;
  Matrix mapping;                 // held-out split for cluster -> label maps
  std::vector<int> mapping_labels;
};

struct TaskData {
  std::size_t task_id = 0;
  Matrix train;  // values in [0, 1]
  EvalData eval;
  std::vector<int> label_set;  // sorted distinct labels of the task
};

struct Stream {
  Scenario scenario = Scenario::class_il;
  std::size_t image_rows = 0;  // 0 when samples are not images
  std::size_t image_cols = 0;
  std::vector<TaskData> tasks;

  std::size_t input_dim() const { return tasks.empty() ? 0 : tasks.front().train.cols(); }
};

struct SplitSizes {
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 100;
  std::size_t map_per_class = 20;

  std::size_t total() const noexcept { return train_per_class + test_per_class + map_per_class; }
};

namespace detail {

/// Indices of each label in the source, each list shuffled by a label-specific stream.
inline std::map<int, std::vector<std::size_t>> shuffled_by_label(const std::vector<int>& labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i]].push_back(i);
  for (auto& [label, idx] : by) {
    Rng rng(derive_seed(seed, 0x5354, static_cast<std::uint64_t>(label)));
    shuffle(idx, rng);
  }
  return by;
}

struct Draw {
  std::vector<std::size_t> train, test, map;
  std::vector<int> train_labels, test_labels, map_labels;
};

/// Takes sizes.total() unused samples of `label`, advancing `cursor`.
inline void take(Draw& d, const std::map<int, std::vector<std::size_t>>& pool, std::map<int, std::size_t>& cursor,
                 int label, const SplitSizes& sizes) {
  auto it = pool.find(label);
  const std::size_t have = it == pool.end() ? 0 : it->second.size();
  std::size_t& c = cursor[label];
  if (c + sizes.total() > have)
    throw InsufficientSamplesError("label " + std::to_string(label) + ": need " + std::to_string(sizes.total()) +
                                   " more samples, " + std::to_string(have - std::min(c, have)) + " left");
  const auto& idx = it->second;
  auto grab = [&](std::vector<std::size_t>& dst, std::vector<int>& lab, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      dst.push_back(idx[c++]);
      lab.push_back(label);
    }
  };
  grab(d.train, d.train_labels, sizes.train_per_class);
  grab(d.test, d.test_labels, sizes.test_per_class);
  grab(d.map, d.map_labels, sizes.map_per_class);
}

/// Shuffles rows of (idx, labels) jointly.
inline void co_shuffle(std::vector<std::size_t>& idx, std::vector<int>& labels, Rng& rng) {
  std::vector<std::size_t> order(idx.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::size_t> i2(idx.size());
  std::vector<int> l2(labels.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    i2[k] = idx[order[k]];
    l2[k] = labels[order[k]];
  }
  idx = std::move(i2);
  labels = std::move(l2);
}

template <typename Transform>
TaskData materialise(std::size_t task_id, const Matrix& source, Draw d, std::uint64_t seed, Transform&& transform) {
  Rng rng(derive_seed(seed, 0x4f52, task_id));
  co_shuffle(d.train, d.train_labels, rng);
  co_shuffle(d.test, d.test_labels, rng);
  co_shuffle(d.map, d.map_labels, rng);
  TaskData t;
  t.task_id = task_id;
  t.train = transform(source.gather_rows(d.train));
  t.eval.train_labels = std::move(d.train_labels);
  t.eval.test = transform(source.gather_rows(d.test));
  t.eval.test_labels = std::move(d.test_labels);
  t.eval.mapping = transform(source.gather_rows(d.map));
  t.eval.mapping_labels = std::move(d.map_labels);
  std::set<int> ls(t.eval.train_labels.begin(), t.eval.train_labels.end());
  ls.insert(t.eval.test_labels.begin(), t.eval.test_labels.end());
  t.label_set.assign(ls.begin(), ls.end());
  return t;
}

}  // namespace detail

/// Default split-MNIST class pairs.
inline std::vector<std::vector<int>> default_class_pairs() { return {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}}; }

/// One task per class group; groups must be pairwise disjoint.
inline Stream build_class_il(const idx::Dataset& source, const std::vector<std::vector<int>>& groups,
                             const SplitSizes& sizes, std::uint64_t seed) {
  std::set<int> seen;
  for (const auto& g : groups)
    for (int label : g)
      if (!seen.insert(label).second) throw ConfigError("class-IL groups overlap on label " + std::to_string(label));
  const auto pool = detail::shuffled_by_label(source.labels, seed);
  std::map<int, std::size_t> cursor;
  Stream s{Scenario::class_il, source.image_rows, source.image_cols, {}};
  for (std::size_t t = 0; t < groups.size(); ++t) {
    detail::Draw d;
    for (int label : groups[t]) detail::take(d, pool, cursor, label, sizes);
    s.tasks.push_back(detail::materialise(t + 1, source.images, std::move(d), seed, [](Matrix m) { return m; }));
  }
  return s;
}

/// Rotates a row-major image counter-clockwise about its centre, bilinear, zero fill.
inline Vector rotate_image(std::span<const double> px, std::size_t rows, std::size_t cols, double degrees) {
  Vector out(px.size(), 0.0);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (static_cast<double>(rows) - 1.0) / 2.0, cx = (static_cast<double>(cols) - 1.0) / 2.0;
  auto at = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(rows) || x >= static_cast<long>(cols)) return 0.0;
    return px[static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      // inverse map: output pixel -> source coordinate (image y axis points down)
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double ax = sx - fx, ay = sy - fy;
      out[y * cols + x] = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                          ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

enum class DomainKind { rotated, permuted };
enum class AngleMode { per_image, per_task };

struct DomainSpec {
  DomainKind kind = DomainKind::rotated;
  std::vector<std::pair<double, double>> rotation_ranges{{0, 30}, {31, 60}, {61, 90}, {91, 120}};
  std::size_t permuted_tasks = 4;
  AngleMode angle_mode = AngleMode::per_image;
};

/// Seeded pixel permutation for a permuted task.
inline std::vector<std::size_t> task_permutation(std::size_t n, std::uint64_t seed, std::size_t task_id) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5045, task_id));
  shuffle(p, rng);
  return p;
}

inline Matrix apply_permutation(const Matrix& m, std::span<const std::size_t> perm) {
  if (perm.size() != m.cols()) throw DimensionError("permutation length mismatch");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, perm[c]);
  return out;
}

/// Every task holds all classes of the source. Samples are disjoint across tasks and splits.
inline Stream build_domain_il(const idx::Dataset& source, const DomainSpec& spec, const SplitSizes& sizes,
                              std::uint64_t seed) {
  const std::size_t task_count =
      spec.kind == DomainKind::rotated ? spec.rotation_ranges.size() : spec.permuted_tasks;
  if (spec.kind == DomainKind::rotated && (source.image_rows == 0 || source.image_cols == 0))
    throw ConfigError("rotated stream needs image dimensions");
  const auto pool = detail::shuffled_by_label(source.labels, seed);
  std::map<int, std::size_t> cursor;
  Stream s{Scenario::domain_il, source.image_rows, source.image_cols, {}};
  for (std::size_t t = 0; t < task_count; ++t) {
    detail::Draw d;
    for (const auto& [label, _] : pool) detail::take(d, pool, cursor, label, sizes);
    const std::size_t task_id = t + 1;
    if (spec.kind == DomainKind::rotated) {
      const auto [lo, hi] = spec.rotation_ranges[t];
      Rng angles(derive_seed(seed, 0x524f, task_id));
      const double task_angle = angles.uniform(lo, hi);
      auto rotate = [&](Matrix m) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
          const double a = spec.angle_mode == AngleMode::per_task ? task_angle : angles.uniform(lo, hi);
          const Vector rot = rotate_image(m.row(r), source.image_rows, source.image_cols, a);
          std::copy(rot.begin(), rot.end(), m.row(r).begin());
        }
        return m;
      };
      s.tasks.push_back(detail::materialise(task_id, source.images, std::move(d), seed, rotate));
    } else {
      const auto perm = task_permutation(source.images.cols(), seed, task_id);
      s.tasks.push_back(detail::materialise(task_id, source.images, std::move(d), seed,
                                            [&](const Matrix& m) { return apply_permutation(m, perm); }));
    }
  }
  return s;
}

struct SyntheticSpec {
  Scenario scenario = Scenario::class_il;
  std::size_t task_count = 2;
  std::size_t classes_per_task = 2;
  std::size_t dim = 32;
  double sigma = 0.05;
  double separation = 30.0;  // minimum distance between class means, in units of sigma
  double drift = 3.0;        // domain-IL mean shift between tasks, in units of sigma
  SplitSizes sizes;
  std::uint64_t seed = 1;
};

/// Class means of a synthetic stream: means[t][c] for task t (0-based), class c.
inline std::vector<std::vector<Vector>> synthetic_means(const SyntheticSpec& spec) {
  if (!(spec.separation > 0.0)) throw ConfigError("synthetic: separation must be > 0");
  if (spec.dim < 4) throw ConfigError("synthetic: dim must be >= 4");
  Rng rng(derive_seed(spec.seed, 0x4d45));
  const std::size_t d = spec.dim;
  const double amp = spec.separation * spec.sigma / std::sqrt(static_cast<double>(d));
  const std::size_t distinct = spec.scenario == Scenario::class_il ? spec.task_count * spec.classes_per_task
                                                                   : spec.classes_per_task;
  // sign patterns at Hamming distance >= d/4 keep means >= separation * sigma apart
  std::vector<std::vector<int>> signs;
  for (std::size_t tries = 0; signs.size() < distinct; ++tries) {
    if (tries > 100000) throw ConfigError("synthetic: cannot place that many separated means; raise dim");
    std::vector<int> s(d);
    for (auto& v : s) v = rng.below(2) ? 1 : -1;
    bool ok = true;
    for (const auto& o : signs) {
      std::size_t ham = 0;
      for (std::size_t i = 0; i < d; ++i) ham += s[i] != o[i];
      if (4 * ham < d) ok = false;
    }
    if (ok) signs.push_back(std::move(s));
  }
  auto mean_of = [&](const std::vector<int>& s) {
    Vector m(d);
    for (std::size_t i = 0; i < d; ++i) m[i] = 0.5 + amp * s[i];
    return m;
  };
  std::vector<std::vector<Vector>> means(spec.task_count);
  for (std::size_t t = 0; t < spec.task_count; ++t) {
    for (std::size_t c = 0; c < spec.classes_per_task; ++c) {
      if (spec.scenario == Scenario::class_il) {
        means[t].push_back(mean_of(signs[t * spec.classes_per_task + c]));
      } else {
        means[t].push_back(mean_of(signs[c]));
      }
    }
  }
  if (spec.scenario == Scenario::domain_il) {
    // zero-sum drift directions with norm drift * sigma
    for (std::size_t t = 0; t < spec.task_count; ++t) {
      std::vector<double> u(d);
      for (std::size_t i = 0; i < d; ++i) u[i] = i < d / 2 ? 1.0 : -1.0;
      shuffle(u, rng);
      const double scale = spec.drift * spec.sigma / std::sqrt(static_cast<double>(2 * (d / 2)));
      for (auto& m : means[t])
        for (std::size_t i = 0; i < d; ++i) m[i] += scale * u[i];
    }
  }
  return means;
}

inline Stream build_synthetic(const SyntheticSpec& spec) {
  const auto means = synthetic_means(spec);
  Stream s{spec.scenario, 0, 0, {}};
  for (std::size_t t = 0; t < spec.task_count; ++t) {
    Rng rng(derive_seed(spec.seed, 0x5359, t + 1));
    auto draw = [&](std::size_t per_class, std::vector<int>& labels) {
      Matrix m(per_class * spec.classes_per_task, spec.dim);
      std::size_t r = 0;
      for (std::size_t c = 0; c < spec.classes_per_task; ++c) {
        const int label = static_cast<int>(spec.scenario == Scenario::class_il ? t * spec.classes_per_task + c : c);
        for (std::size_t i = 0; i < per_class; ++i, ++r) {
          for (std::size_t j = 0; j < spec.dim; ++j)
            m(r, j) = std::clamp(means[t][c][j] + spec.sigma * rng.normal(), 0.0, 1.0);
          labels.push_back(label);
        }
      }
      // interleave classes
      std::vector<std::size_t> order(m.rows());
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle(order, rng);
      std::vector<int> l2(labels.size());
      for (std::size_t k = 0; k < order.size(); ++k) l2[k] = labels[order[k]];
      labels = std::move(l2);
      return m.gather_rows(order);
    };
    TaskData td;
    td.task_id = t + 1;
    td.train = draw(spec.sizes.train_per_class, td.eval.train_labels);
    td.eval.test = draw(spec.sizes.test_per_class, td.eval.test_labels);
    td.eval.mapping = draw(spec.sizes.map_per_class, td.eval.mapping_labels);
    std::set<int> ls(td.eval.train_labels.begin(), td.eval.train_labels.end());
    td.label_set.assign(ls.begin(), ls.end());
    s.tasks.push_back(std::move(td));
  }
  return s;
}

/// Throws unless class-IL label sets are pairwise disjoint and domain-IL label sets identical.
inline void check_label_sets(const Stream& s) {
  for (std::size_t a = 0; a < s.tasks.size(); ++a) {
    for (std::size_t b = a + 1; b < s.tasks.size(); ++b) {
      const auto& la = s.tasks[a].label_set;
      const auto& lb = s.tasks[b].label_set;
      if (s.scenario == Scenario::class_il) {
        std::vector<int> common;
        std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(common));
        if (!common.empty()) throw ConfigError("class-IL tasks share labels");
      } else if (la != lb) {
        throw ConfigError("domain-IL tasks must share one label set");
      }
    }
  }
}

}  // namespace utell::streams
