// utell: command line front end.
//
//   utell train  <config> [--report PATH]
//   utell extend <store> <config> [--report PATH]
//   utell eval   <store> <config> [--routing ce|cos|oracle] [--cos-batch N] [--report PATH]
//   utell gen    <store> --task T --n N --out PREFIX [--seed S]
//   utell mem    --d D --k K --nk NK

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "utell/harness.hpp"

namespace {

using namespace utell;

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void print_summary(const EvalReport& r) {
  std::printf("routing %s\n", routing_name(r.routing));
  for (std::size_t t = 0; t < r.accuracy.size(); ++t)
    std::printf("task %zu  A=%.4f  oracle=%.4f  routed-correctly=%.4f\n", t + 1, r.accuracy[t], r.oracle_accuracy[t],
                r.routing_accuracy[t]);
  std::printf("ACC %.4f  oracle ACC %.4f\n", r.acc, r.oracle_acc);
  std::printf("signature memory: predicted %zu bytes (%.4f MB), measured %zu bytes\n", r.memory.predicted_bytes,
              r.memory.predicted_megabytes, r.memory.measured_signature_bytes);
}

std::filesystem::path report_path(const std::string& flag, const std::filesystem::path& store) {
  return flag.empty() ? store / "report.json" : std::filesystem::path(flag);
}

int train(const std::string& config_path, const std::string& report) {
  const RunConfig cfg = load_config(config_path);
  const auto stream = build_stream(cfg);
  log_line("stream: " + std::to_string(stream.tasks.size()) + " tasks, input dim " +
           std::to_string(stream.input_dim()));
  const auto run = run_continual(cfg, stream, log_line);
  save_store(run.model, cfg.output_dir);
  const auto rep = evaluate(run.model, stream, default_routing(cfg), cfg.cos_batch());
  emit_report(rep, report_path(report, cfg.output_dir), &run.timing);
  print_summary(rep);
  return 0;
}

int extend_store(const std::string& store, const std::string& config_path, const std::string& report) {
  const RunConfig cfg = load_config(config_path);
  const auto stream = build_stream(cfg);
  auto run = extend(load_store(store), cfg, stream, log_line);
  save_store(run.model, store);
  const auto rep = evaluate(run.model, stream, default_routing(cfg), cfg.cos_batch());
  emit_report(rep, report_path(report, store), &run.timing);
  print_summary(rep);
  return 0;
}

int eval(const std::string& store, const std::string& config_path, const std::string& routing, std::size_t cos_batch,
         const std::string& report) {
  const RunConfig cfg = load_config(config_path);
  const auto model = load_store(store);
  const auto stream = build_stream(cfg);
  const Routing r = routing.empty() ? default_routing(cfg)
                    : routing == "ce" ? Routing::ce
                    : routing == "cos" ? Routing::cos
                                       : Routing::oracle;
  const auto rep = evaluate(model, stream, r, cos_batch ? cos_batch : cfg.cos_batch());
  if (!report.empty()) emit_report(rep, report);
  print_summary(rep);
  return 0;
}

int gen(const std::string& store, std::size_t task, std::size_t n, const std::string& out, std::uint64_t seed) {
  const auto model = load_store(store);
  Rng rng(derive_seed(seed, seeds::generate, task));
  const auto set = generate(model.experts, task, n, rng);
  std::size_t rows = model.image_rows, cols = model.image_cols;
  if (rows * cols != set.data.cols()) {
    rows = 1;
    cols = set.data.cols();
  }
  idx::write_images(out + "-images-idx3-ubyte", set.data, rows, cols);
  idx::write_labels(out + "-labels-idx1-ubyte", std::vector<int>(set.pseudo_labels.begin(), set.pseudo_labels.end()));
  std::printf("wrote %zu samples for task %zu to %s-*-ubyte\n", set.data.rows(), task, out.c_str());
  return 0;
}

int mem(std::size_t d, std::size_t k, std::size_t nk) {
  const auto m = signature::memory_estimate(d, k, nk);
  std::printf("values %zu\nbytes %zu\nmegabytes %.6f\n", m.values, m.bytes, m.megabytes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replay-free unsupervised continual learning with task experts"};
  app.require_subcommand(1);

  std::string config, store, report, routing, out;
  std::size_t cos_batch = 0, task = 1, n = 1000, d = 64, k = 5, nk = 2;
  std::uint64_t seed = 1;

  auto* t = app.add_subcommand("train", "train on every task of a stream and save the store");
  t->add_option("config", config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
  t->add_option("--report", report, "report path (default: <output_dir>/report.json)");

  auto* x = app.add_subcommand("extend", "learn the stream tasks beyond those in a store");
  x->add_option("store", store, "store directory")->required()->check(CLI::ExistingDirectory);
  x->add_option("config", config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
  x->add_option("--report", report, "report path (default: <store>/report.json)");

  auto* e = app.add_subcommand("eval", "evaluate a store on the test splits of a stream");
  e->add_option("store", store, "store directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("config", config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
  e->add_option("--routing", routing, "ce, cos or oracle (default: from config)")
      ->check(CLI::IsMember({"ce", "cos", "oracle"}));
  e->add_option("--cos-batch", cos_batch, "cosine routing batch size (default: from config)");
  e->add_option("--report", report, "also write the report to this path");

  auto* g = app.add_subcommand("gen", "generate samples for a task and write them as IDX files");
  g->add_option("store", store, "store directory")->required()->check(CLI::ExistingDirectory);
  g->add_option("--task", task, "task id")->required();
  g->add_option("--n", n, "number of samples")->required()->check(CLI::PositiveNumber);
  g->add_option("--out", out, "output prefix")->required();
  g->add_option("--seed", seed, "random seed");

  auto* m = app.add_subcommand("mem", "signature memory estimate");
  m->add_option("--d", d, "latent dimension")->check(CLI::PositiveNumber);
  m->add_option("--k", k, "number of tasks")->check(CLI::PositiveNumber);
  m->add_option("--nk", nk, "signatures per task")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) return train(config, report);
    if (x->parsed()) return extend_store(store, config, report);
    if (e->parsed()) return eval(store, config, routing, cos_batch, report);
    if (g->parsed()) return gen(store, task, n, out, seed);
    return mem(d, k, nk);
  } catch (const std::exception& ex) {
    std::cerr << "utell: error: " << ex.what() << '\n';
    return 1;
  }
}
