#pragma once

// End-to-end driver: builds the task stream from a RunConfig, trains one expert
// per task, regenerates every task from its signatures to train the task
// assigner, and evaluates routed and oracle-routed accuracy.
//
// Random streams are derived from the run seed by purpose, so the generated set
// of task t does not depend on how many tasks follow it.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "utell/assigner.hpp"
#include "utell/clustering.hpp"
#include "utell/config.hpp"
#include "utell/error.hpp"
#include "utell/expert.hpp"
#include "utell/generator.hpp"
#include "utell/idx.hpp"
#include "utell/rng.hpp"
#include "utell/signature.hpp"
#include "utell/store.hpp"
#include "utell/streams.hpp"

namespace utell {

namespace seeds {
inline constexpr std::uint64_t stream = 0x53;
inline constexpr std::uint64_t expert = 0x45;
inline constexpr std::uint64_t generate = 0x47;
inline constexpr std::uint64_t assigner = 0x41;
}  // namespace seeds

inline streams::Stream build_stream(const RunConfig& c) {
  const std::uint64_t seed = derive_seed(c.seed, seeds::stream, 0);
  streams::Stream s;
  if (c.stream.source == Source::synthetic) {
    auto spec = c.stream.synthetic;
    spec.seed = seed;
    s = streams::build_synthetic(spec);
  } else {
    const auto data = idx::load(c.stream.images, c.stream.labels);
    s = c.stream.scenario == streams::Scenario::class_il
            ? streams::build_class_il(data, c.stream.class_groups, c.stream.sizes, seed)
            : streams::build_domain_il(data, c.stream.domain, c.stream.sizes, seed);
  }
  streams::check_label_sets(s);
  return s;
}

/// Expert configuration for one task: input width from the stream, one cluster
/// per class unless fixed in the config.
inline ExpertConfig expert_config_for(const RunConfig& c, const streams::Stream& s, const streams::TaskData& t) {
  ExpertConfig e = c.expert;
  e.arch.input_dim = s.input_dim();
  e.clusters = c.clusters ? c.clusters : t.label_set.size();
  return e;
}

struct Timing {
  std::vector<double> expert_seconds;  // per trained task
  double generate_seconds = 0.0;
  double assigner_seconds = 0.0;
};

struct RunResult {
  ModelStore model;
  Timing timing;
  /// Oracle-routed cluster ids on each task's test split, taken right after the task was learned.
  std::vector<std::vector<std::size_t>> probes;
};

using Progress = std::function<void(const std::string&)>;

namespace harness_detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

/// Trains experts for every stream task not yet in the store.
inline void train_new_tasks(RunResult& r, const RunConfig& c, const streams::Stream& s, const Progress& progress) {
  auto& experts = r.model.experts;
  for (std::size_t t = experts.size() + 1; t <= s.tasks.size(); ++t) {
    const auto& task = s.tasks[t - 1];
    const auto t0 = std::chrono::steady_clock::now();
    const ExpertConfig ec = expert_config_for(c, s, task);
    Rng rng(derive_seed(c.seed, seeds::expert, t));
    TaskExpert e = new_expert(t, experts.empty() ? nullptr : &experts.back(), ec, rng);
    e = train_expert(std::move(e), task.train, ec, rng);
    r.probes.push_back(expert_predict(e, task.eval.test));
    experts.append(std::move(e));
    r.timing.expert_seconds.push_back(seconds_since(t0));
    say(progress, "task " + std::to_string(t) + ": expert trained in " +
                      std::to_string(r.timing.expert_seconds.back()) + " s");
  }
}

}  // namespace harness_detail

/// Generated set of every stored task, each from its own seed.
inline std::vector<GeneratedSet> generate_all(const ExpertStore& experts, const RunConfig& c) {
  std::vector<GeneratedSet> sets;
  for (std::size_t t = 1; t <= experts.size(); ++t) {
    Rng rng(derive_seed(c.seed, seeds::generate, t));
    sets.push_back(generate(experts, t, c.generate_per_task, rng, c.generate));
  }
  return sets;
}

/// Rebuilds the routers for the current experts from regenerated data only.
inline void retrain_router(RunResult& r, const RunConfig& c, const Progress& progress = {}) {
  auto t0 = std::chrono::steady_clock::now();
  const auto sets = generate_all(r.model.experts, c);
  r.timing.generate_seconds = harness_detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.model.router = {};
  if (c.assigner.kind != AssignerKind::cos) {
    Rng rng(derive_seed(c.seed, seeds::assigner, sets.size()));
    r.model.router.ce = assigner::train_ta_ce(sets, c.assigner.ce, rng);
    if (!r.model.router.ce->warning.empty()) harness_detail::say(progress, "warning: " + r.model.router.ce->warning);
  }
  if (c.assigner.kind != AssignerKind::ce) r.model.router.cos = assigner::build_cosine(sets, c.assigner.cos_mode);
  r.timing.assigner_seconds = harness_detail::seconds_since(t0);
  harness_detail::say(progress, "assigner trained on " + std::to_string(sets.size()) + " generated sets");
}

inline RunResult run_continual(const RunConfig& c, const streams::Stream& s, const Progress& progress = {}) {
  if (s.tasks.empty()) throw EmptyInputError("run_continual: empty stream");
  RunResult r;
  r.model.scenario = s.scenario;
  r.model.image_rows = s.image_rows;
  r.model.image_cols = s.image_cols;
  harness_detail::train_new_tasks(r, c, s, progress);
  retrain_router(r, c, progress);
  return r;
}

/// Learns the stream tasks beyond those already in `model`, then retrains the router.
/// Existing experts are carried over untouched.
inline RunResult extend(ModelStore model, const RunConfig& c, const streams::Stream& s, const Progress& progress = {}) {
  if (model.experts.empty()) throw EmptyInputError("extend: store holds no experts");
  if (s.scenario != model.scenario) throw ConfigError("extend: stream scenario differs from the stored model");
  if (s.input_dim() != model.experts.back().params().input_dim)
    throw DimensionError("extend: stream input dimension differs from the stored experts");
  if (s.tasks.size() <= model.experts.size())
    throw ConfigError("extend: stream has no tasks beyond the " + std::to_string(model.experts.size()) + " stored");
  RunResult r;
  r.model = std::move(model);
  harness_detail::train_new_tasks(r, c, s, progress);
  retrain_router(r, c, progress);
  return r;
}

enum class Routing { ce, cos, oracle };

inline const char* routing_name(Routing r) {
  switch (r) {
    case Routing::ce: return "ce";
    case Routing::cos: return "cos";
    default: return "oracle";
  }
}

inline Routing default_routing(const RunConfig& c) {
  return c.assigner.kind == AssignerKind::cos ? Routing::cos : Routing::ce;
}

struct MemoryReport {
  std::size_t predicted_values = 0;
  std::size_t predicted_bytes = 0;
  double predicted_megabytes = 0.0;
  std::size_t measured_signature_bytes = 0;  // float32 payload as serialized
};

/// Predicted signature memory: per expert, 2 d n_k + d^2 n_k values at 4 bytes.
inline MemoryReport memory_report(const ExpertStore& experts) {
  MemoryReport m;
  for (const auto& e : experts) {
    const auto est = signature::memory_estimate(e.params().latent_dim, 1, e.signatures().size());
    m.predicted_values += est.values;
    m.predicted_bytes += est.bytes;
    m.measured_signature_bytes += store_detail::encode_expert(e).second;
  }
  m.predicted_megabytes = static_cast<double>(m.predicted_bytes) / 1e6;
  return m;
}

struct EvalReport {
  Routing routing = Routing::ce;
  std::size_t cos_batch = 1;
  std::vector<double> accuracy;          // A_t under the chosen routing
  std::vector<double> oracle_accuracy;   // A_t with the true task id
  std::vector<double> routing_accuracy;  // fraction of test samples sent to their own task
  double acc = 0.0;
  double oracle_acc = 0.0;
  double mean_routing_accuracy = 0.0;
  MemoryReport memory;
};

/// Per-sample task ids for `x` under the requested router.
inline std::vector<std::size_t> route(const ModelStore& m, const Matrix& x, Routing routing, std::size_t cos_batch,
                                      std::size_t true_task) {
  switch (routing) {
    case Routing::ce:
      if (!m.router.ce) throw ConfigError("evaluate: no cross-entropy assigner in the store");
      return assigner::ta_ce_route(*m.router.ce, x);
    case Routing::cos:
      if (!m.router.cos) throw ConfigError("evaluate: no cosine assigner in the store");
      return assigner::ta_cos_route(*m.router.cos, x, cos_batch);
    default: return std::vector<std::size_t>(x.rows(), true_task);
  }
}

/// Cluster-to-label maps for every stored expert, fitted on each task's mapping split.
inline std::vector<clustering::ClusterLabelMap> fit_label_maps(const ModelStore& m, const streams::Stream& s) {
  std::vector<clustering::ClusterLabelMap> maps;
  for (std::size_t t = 1; t <= m.experts.size(); ++t) {
    const auto& e = m.experts.at(t);
    const auto& ev = s.tasks.at(t - 1).eval;
    maps.push_back(clustering::fit_label_map(e.kmeans(), latent_of(e, ev.mapping), ev.mapping_labels));
  }
  return maps;
}

/// Predicted labels of `x` when sample i is handled by expert ids[i].
inline std::vector<int> routed_labels(const ModelStore& m, const std::vector<clustering::ClusterLabelMap>& maps,
                                      const Matrix& x, const std::vector<std::size_t>& ids) {
  std::vector<int> out(x.rows(), 0);
  for (std::size_t t = 1; t <= m.experts.size(); ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == t) rows.push_back(i);
    if (rows.empty()) continue;
    const auto labels = expert_predict_labels(m.experts.at(t), x.gather_rows(rows), maps[t - 1]);
    for (std::size_t j = 0; j < rows.size(); ++j) out[rows[j]] = labels[j];
  }
  return out;
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (truth.empty()) throw EmptyInputError("accuracy: empty test split");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Evaluates every stored task on its test split. Test batches for cosine
/// routing never span two tasks.
inline EvalReport evaluate(const ModelStore& m, const streams::Stream& s, Routing routing, std::size_t cos_batch) {
  if (m.experts.empty()) throw EmptyInputError("evaluate: store holds no experts");
  if (s.tasks.size() < m.experts.size()) throw ConfigError("evaluate: stream has fewer tasks than the store");
  if (s.input_dim() != m.experts.back().params().input_dim)
    throw DimensionError("evaluate: stream input dimension differs from the stored experts");
  EvalReport rep;
  rep.routing = routing;
  rep.cos_batch = cos_batch;
  const auto maps = fit_label_maps(m, s);
  for (std::size_t t = 1; t <= m.experts.size(); ++t) {
    const auto& ev = s.tasks[t - 1].eval;
    const auto ids = route(m, ev.test, routing, cos_batch, t);
    rep.accuracy.push_back(accuracy(routed_labels(m, maps, ev.test, ids), ev.test_labels));
    const std::vector<std::size_t> own(ev.test.rows(), t);
    rep.oracle_accuracy.push_back(accuracy(routed_labels(m, maps, ev.test, own), ev.test_labels));
    rep.routing_accuracy.push_back(static_cast<double>(std::count(ids.begin(), ids.end(), t)) /
                                   static_cast<double>(ids.size()));
  }
  rep.acc = mean(rep.accuracy);
  rep.oracle_acc = mean(rep.oracle_accuracy);
  rep.mean_routing_accuracy = mean(rep.routing_accuracy);
  rep.memory = memory_report(m.experts);
  return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["routing"] = routing_name(r.routing);
  j["cos_batch"] = r.cos_batch;
  j["tasks"] = r.accuracy.size();
  j["per_task_accuracy"] = r.accuracy;
  j["acc"] = r.acc;
  j["oracle_per_task_accuracy"] = r.oracle_accuracy;
  j["oracle_acc"] = r.oracle_acc;
  j["per_task_routing_accuracy"] = r.routing_accuracy;
  j["routing_accuracy"] = r.mean_routing_accuracy;
  j["memory"] = {{"predicted_values", r.memory.predicted_values},
                 {"predicted_bytes", r.memory.predicted_bytes},
                 {"predicted_megabytes", r.memory.predicted_megabytes},
                 {"measured_signature_bytes", r.memory.measured_signature_bytes}};
  return j;
}

inline nlohmann::json to_json(const Timing& t) {
  return {{"expert_seconds", t.expert_seconds},
          {"generate_seconds", t.generate_seconds},
          {"assigner_seconds", t.assigner_seconds}};
}

/// Writes the report as JSON. Wall-clock timings, when given, go to a sidecar
/// "<path>.timing.json" so the report itself is reproducible byte for byte.
inline void emit_report(const EvalReport& r, const std::filesystem::path& path, const Timing* timing = nullptr) {
  auto write = [](const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream out(p, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw FormatError("cannot write " + p.string());
  };
  write(path, to_json(r));
  if (timing) write(path.string() + ".timing.json", to_json(*timing));
}

}  // namespace utell
