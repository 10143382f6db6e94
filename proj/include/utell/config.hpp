#pragma once

// Run configuration, read from an INI-style file:
//
//   [run]        seed, output_dir
//   [stream]     source (idx|synthetic), scenario (class_il|domain_il), images, labels,
//                class_groups ("0 1, 2 3, ..."), domain (rotated|permuted), rotation_ranges
//                ("0 30, 31 60, ..."), angle_mode (per_image|per_task), permuted_tasks,
//                train_per_class, test_per_class, map_per_class
//   [synthetic]  task_count, classes_per_task, dim, sigma, separation, drift
//   [vae]        latent_dim, beta, reconstruction (bernoulli|squared_error), encoder_hidden,
//                decoder_hidden, epochs, batch_size, lr, momentum, kl_warmup_epochs, clip_norm
//   [cluster]    clusters (0 = classes per task), max_iter, restarts
//   [signature]  granularity (cluster|task), eig_tol
//   [generate]   n_per_task, struct_threshold, max_retries
//   [assigner]   kind (ce|cos|both), hidden, epochs, batch_size, lr, momentum,
//                cos_mode (mean_sample|pairwise), cos_batch (0 = 125 for domain-IL, 1 for class-IL)
//
// Every key is optional; unknown sections or keys are rejected. Relative paths
// resolve against the directory holding the config file.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "utell/assigner.hpp"
#include "utell/error.hpp"
#include "utell/expert.hpp"
#include "utell/generator.hpp"
#include "utell/streams.hpp"

namespace utell {

enum class Source { idx, synthetic };
enum class AssignerKind { ce, cos, both };

struct StreamConfig {
  Source source = Source::idx;
  streams::Scenario scenario = streams::Scenario::class_il;
  std::string images = "data/mnist/digits-images-idx3-ubyte.gz";
  std::string labels = "data/mnist/digits-labels-idx1-ubyte.gz";
  std::vector<std::vector<int>> class_groups = streams::default_class_pairs();
  streams::DomainSpec domain;
  streams::SplitSizes sizes;
  streams::SyntheticSpec synthetic;
};

struct AssignerConfig {
  AssignerKind kind = AssignerKind::ce;
  assigner::CeConfig ce;
  assigner::CosineMode cos_mode = assigner::CosineMode::mean_sample;
  std::size_t cos_batch = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "utell_store";
  StreamConfig stream;
  ExpertConfig expert;
  std::size_t clusters = 0;  // 0: classes per task
  std::size_t generate_per_task = 1000;
  GenerateOptions generate;
  AssignerConfig assigner;

  /// Routing batch for the cosine assigner after resolving the automatic default.
  std::size_t cos_batch() const {
    if (assigner.cos_batch != 0) return assigner.cos_batch;
    return stream.scenario == streams::Scenario::domain_il ? 125 : 1;
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(expert.arch.latent_dim, "vae.latent_dim");
    positive(expert.train.batch_size, "vae.batch_size");
    positive(expert.kmeans_max_iter, "cluster.max_iter");
    positive(generate_per_task, "generate.n_per_task");
    positive(assigner.ce.hidden, "assigner.hidden");
    positive(assigner.ce.batch_size, "assigner.batch_size");
    if (!(expert.arch.beta > 0.0)) throw ConfigError("vae.beta must be > 0");
    if (!(expert.train.lr > 0.0) || !(assigner.ce.lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (stream.source == Source::synthetic) {
      positive(stream.synthetic.task_count, "synthetic.task_count");
      positive(stream.synthetic.classes_per_task, "synthetic.classes_per_task");
    }
  }
};

namespace config_detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "output_dir"}},
      {"stream",
       {"source", "scenario", "images", "labels", "class_groups", "domain", "rotation_ranges", "angle_mode",
        "permuted_tasks", "train_per_class", "test_per_class", "map_per_class"}},
      {"synthetic", {"task_count", "classes_per_task", "dim", "sigma", "separation", "drift"}},
      {"vae",
       {"latent_dim", "beta", "reconstruction", "encoder_hidden", "decoder_hidden", "epochs", "batch_size", "lr",
        "momentum", "kl_warmup_epochs", "clip_norm"}},
      {"cluster", {"clusters", "max_iter", "restarts"}},
      {"signature", {"granularity", "eig_tol"}},
      {"generate", {"n_per_task", "struct_threshold", "max_retries"}},
      {"assigner", {"kind", "hidden", "epochs", "batch_size", "lr", "momentum", "cos_mode", "cos_batch"}},
  };
  return keys;
}

template <typename T>
void read(const ptree& pt, const std::string& key, T& out) {
  if (pt.get_child_optional(key)) out = pt.get<T>(key);
}

template <typename T>
std::vector<T> numbers(const std::string& text) {
  std::vector<T> out;
  std::istringstream in(text);
  T v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw ConfigError("malformed number list: '" + text + "'");
  return out;
}

/// "0 1, 2 3" -> {{0, 1}, {2, 3}}
template <typename T>
std::vector<std::vector<T>> groups(const std::string& text) {
  std::vector<std::vector<T>> out;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, ',')) {
    auto g = numbers<T>(part);
    if (g.empty()) throw ConfigError("empty group in '" + text + "'");
    out.push_back(std::move(g));
  }
  return out;
}

template <typename E>
E choice(const std::string& text, const std::map<std::string, E>& options, const std::string& key) {
  auto it = options.find(text);
  if (it == options.end()) throw ConfigError("invalid value '" + text + "' for " + key);
  return it->second;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (base / path).lexically_normal().string();
}

}  // namespace config_detail

/// Parses configuration text; `base_dir` anchors relative paths.
inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : root) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, _] : body)
      if (!it->second.count(key)) throw ConfigError("config: unknown key " + section + "." + key);
  }

  RunConfig c;
  try {
    const ptree empty;
    auto sec = [&](const char* name) -> const ptree& {
      auto child = root.get_child_optional(name);
      return child ? *child : empty;
    };

    const ptree& run = sec("run");
    read(run, "seed", c.seed);
    read(run, "output_dir", c.output_dir);
    c.output_dir = resolve(base_dir, c.output_dir);

    auto& st = c.stream;
    const ptree& s = sec("stream");
    if (auto v = s.get_optional<std::string>("source"))
      st.source = choice<Source>(*v, {{"idx", Source::idx}, {"synthetic", Source::synthetic}}, "stream.source");
    if (auto v = s.get_optional<std::string>("scenario"))
      st.scenario = choice<streams::Scenario>(
          *v, {{"class_il", streams::Scenario::class_il}, {"domain_il", streams::Scenario::domain_il}},
          "stream.scenario");
    read(s, "images", st.images);
    read(s, "labels", st.labels);
    st.images = resolve(base_dir, st.images);
    st.labels = resolve(base_dir, st.labels);
    if (auto v = s.get_optional<std::string>("class_groups")) st.class_groups = groups<int>(*v);
    if (auto v = s.get_optional<std::string>("domain"))
      st.domain.kind = choice<streams::DomainKind>(
          *v, {{"rotated", streams::DomainKind::rotated}, {"permuted", streams::DomainKind::permuted}},
          "stream.domain");
    if (auto v = s.get_optional<std::string>("rotation_ranges")) {
      st.domain.rotation_ranges.clear();
      for (const auto& g : groups<double>(*v)) {
        if (g.size() != 2 || g[0] > g[1]) throw ConfigError("stream.rotation_ranges: expected 'lo hi' pairs");
        st.domain.rotation_ranges.emplace_back(g[0], g[1]);
      }
    }
    if (auto v = s.get_optional<std::string>("angle_mode"))
      st.domain.angle_mode = choice<streams::AngleMode>(
          *v, {{"per_image", streams::AngleMode::per_image}, {"per_task", streams::AngleMode::per_task}},
          "stream.angle_mode");
    read(s, "permuted_tasks", st.domain.permuted_tasks);
    read(s, "train_per_class", st.sizes.train_per_class);
    read(s, "test_per_class", st.sizes.test_per_class);
    read(s, "map_per_class", st.sizes.map_per_class);

    const ptree& sy = sec("synthetic");
    read(sy, "task_count", st.synthetic.task_count);
    read(sy, "classes_per_task", st.synthetic.classes_per_task);
    read(sy, "dim", st.synthetic.dim);
    read(sy, "sigma", st.synthetic.sigma);
    read(sy, "separation", st.synthetic.separation);
    read(sy, "drift", st.synthetic.drift);
    st.synthetic.scenario = st.scenario;
    st.synthetic.sizes = st.sizes;

    auto& ex = c.expert;
    const ptree& v = sec("vae");
    read(v, "latent_dim", ex.arch.latent_dim);
    read(v, "beta", ex.arch.beta);
    if (auto r = v.get_optional<std::string>("reconstruction"))
      ex.arch.reconstruction = choice<vae::Reconstruction>(
          *r, {{"bernoulli", vae::Reconstruction::bernoulli}, {"squared_error", vae::Reconstruction::squared_error}},
          "vae.reconstruction");
    if (auto h = v.get_optional<std::string>("encoder_hidden")) ex.arch.encoder_hidden = numbers<std::size_t>(*h);
    if (auto h = v.get_optional<std::string>("decoder_hidden")) ex.arch.decoder_hidden = numbers<std::size_t>(*h);
    read(v, "epochs", ex.train.epochs);
    read(v, "batch_size", ex.train.batch_size);
    read(v, "lr", ex.train.lr);
    read(v, "momentum", ex.train.momentum);
    read(v, "kl_warmup_epochs", ex.train.kl_warmup_epochs);
    read(v, "clip_norm", ex.train.clip_norm);

    const ptree& cl = sec("cluster");
    read(cl, "clusters", c.clusters);
    read(cl, "max_iter", ex.kmeans_max_iter);
    read(cl, "restarts", ex.kmeans_restarts);

    const ptree& sg = sec("signature");
    if (auto g = sg.get_optional<std::string>("granularity"))
      ex.granularity = choice<SignatureGranularity>(
          *g, {{"cluster", SignatureGranularity::cluster}, {"task", SignatureGranularity::task}},
          "signature.granularity");
    read(sg, "eig_tol", ex.eig_tol);

    const ptree& gn = sec("generate");
    read(gn, "n_per_task", c.generate_per_task);
    read(gn, "struct_threshold", c.generate.struct_threshold);
    read(gn, "max_retries", c.generate.max_retries);

    auto& as = c.assigner;
    const ptree& a = sec("assigner");
    if (auto k = a.get_optional<std::string>("kind"))
      as.kind = choice<AssignerKind>(*k, {{"ce", AssignerKind::ce}, {"cos", AssignerKind::cos}, {"both", AssignerKind::both}},
                                     "assigner.kind");
    read(a, "hidden", as.ce.hidden);
    read(a, "epochs", as.ce.epochs);
    read(a, "batch_size", as.ce.batch_size);
    read(a, "lr", as.ce.lr);
    read(a, "momentum", as.ce.momentum);
    if (auto m = a.get_optional<std::string>("cos_mode"))
      as.cos_mode = choice<assigner::CosineMode>(
          *m, {{"mean_sample", assigner::CosineMode::mean_sample}, {"pairwise", assigner::CosineMode::pairwise}},
          "assigner.cos_mode");
    read(a, "cos_batch", as.cos_batch);
  } catch (const boost::property_tree::ptree_bad_data& e) {
    throw ConfigError(std::string("config: bad value: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, std::filesystem::path(path).parent_path());
}

}  // namespace utell
