#pragma once

// On-disk model store. A directory holds one binary file per expert, one for
// the task assigner and a text manifest listing every file with its size and
// CRC-32. All binary values are little-endian. VAE weights and k-means centers
// are float64; signatures are float32, 4 bytes per stored value.
//
//   expert_NNNN.bin  "UTEX" | version u8 | task u32 | vae | kmeans | signatures
//   assigner.bin     "UTTA" | version u8 | has_ce u8 [ce] | has_cos u8 [cos]
//   manifest.txt     key/value lines, "file <name> <bytes> <crc32>" per artifact

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "utell/assigner.hpp"
#include "utell/dense.hpp"
#include "utell/error.hpp"
#include "utell/expert.hpp"
#include "utell/streams.hpp"

namespace utell {

/// Routers trained for the current set of tasks; either may be absent.
struct Router {
  std::optional<assigner::CeModel> ce;
  std::optional<assigner::CosineModel> cos;
};

struct ModelStore {
  ExpertStore experts;
  Router router;
  streams::Scenario scenario = streams::Scenario::class_il;
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
};

namespace store_detail {

inline constexpr std::uint8_t kVersion = 1;

class Writer {
public:
  void bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > 0xffffffffu) throw FormatError("store: value does not fit in 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  Reader(std::vector<std::uint8_t> buf, std::string name) : buf_(std::move(buf)), name_(std::move(name)) {}

  void expect(const char* magic) {
    for (std::size_t i = 0; i < 4; ++i)
      if (need(1), buf_[pos_++] != static_cast<std::uint8_t>(magic[i])) throw FormatError(name_ + ": bad magic");
    if (u8() != kVersion) throw FormatError(name_ + ": unsupported version");
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  void f64s(std::span<double> out) {
    need(8 * out.size());
    for (double& x : out) x = f64();
  }
  void finish() const {
    if (pos_ != buf_.size()) throw FormatError(name_ + ": trailing bytes");
  }
  const std::string& name() const noexcept { return name_; }

private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError(name_ + ": truncated");
  }
  std::vector<std::uint8_t> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline Activation activation_from(std::uint8_t v, const Reader& r) {
  if (v > 2) throw FormatError(r.name() + ": bad activation code");
  return static_cast<Activation>(v);
}

inline void put_mlp(Writer& w, const Mlp& m) {
  w.u8(static_cast<std::uint8_t>(m.hidden));
  w.u8(static_cast<std::uint8_t>(m.output));
  w.size(m.layers.size());
  for (const auto& l : m.layers) {
    w.size(l.fan_in());
    w.size(l.fan_out());
    w.f64s(l.weight.data());
    w.f64s(l.bias);
  }
}

inline Mlp get_mlp(Reader& r) {
  Mlp m;
  m.hidden = activation_from(r.u8(), r);
  m.output = activation_from(r.u8(), r);
  const std::size_t n = r.u32();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t in = r.u32(), out = r.u32();
    if (in == 0 || out == 0 || (i > 0 && in != m.layers.back().fan_out()))
      throw FormatError(r.name() + ": inconsistent layer shapes");
    DenseLayer l{Matrix(in, out), Vector(out)};
    r.f64s(l.weight.data());
    r.f64s(l.bias);
    m.layers.push_back(std::move(l));
  }
  return m;
}

inline void put_matrix(Writer& w, const Matrix& m) {
  w.size(m.rows());
  w.size(m.cols());
  w.f64s(m.data());
}

inline Matrix get_matrix(Reader& r) {
  const std::size_t rows = r.u32(), cols = r.u32();
  Matrix m(rows, cols);
  r.f64s(m.data());
  return m;
}

/// Returns the serialized expert and the number of signature payload bytes in it.
inline std::pair<std::vector<std::uint8_t>, std::size_t> encode_expert(const TaskExpert& e) {
  Writer w;
  w.bytes("UTEX", 4);
  w.u8(kVersion);
  w.size(e.task_id());
  const auto& p = e.params();
  w.u8(static_cast<std::uint8_t>(p.reconstruction));
  w.f64(p.beta);
  w.size(p.input_dim);
  w.size(p.latent_dim);
  put_mlp(w, p.encoder);
  put_mlp(w, p.decoder);
  put_matrix(w, e.kmeans().centers);
  w.size(e.signatures().size());
  std::size_t payload = 0;
  for (const auto& s : e.signatures()) {
    w.size(s.cluster_id);
    w.size(s.dim());
    const std::size_t before = w.buffer().size();
    for (double v : s.mean) w.f32(v);
    for (double v : s.eigvals) w.f32(v);
    for (double v : s.eigvecs.data()) w.f32(v);
    payload += w.buffer().size() - before;
  }
  return {w.buffer(), payload};
}

inline TaskExpert decode_expert(Reader r) {
  r.expect("UTEX");
  const std::size_t task_id = r.u32();
  vae::Params p;
  const std::uint8_t rec = r.u8();
  if (rec > 1) throw FormatError(r.name() + ": bad reconstruction code");
  p.reconstruction = static_cast<vae::Reconstruction>(rec);
  p.beta = r.f64();
  p.input_dim = r.u32();
  p.latent_dim = r.u32();
  p.encoder = get_mlp(r);
  p.decoder = get_mlp(r);
  if (p.encoder.input_dim() != p.input_dim || p.encoder.output_dim() != 2 * p.latent_dim ||
      p.decoder.input_dim() != p.latent_dim || p.decoder.output_dim() != p.input_dim)
    throw FormatError(r.name() + ": network shapes disagree with header");
  clustering::KMeansModel km{get_matrix(r)};
  if (km.centers.cols() != p.latent_dim) throw FormatError(r.name() + ": center dimension mismatch");
  std::vector<signature::LatentSignature> sigs(r.u32());
  for (auto& s : sigs) {
    s.task_id = task_id;
    s.cluster_id = r.u32();
    const std::size_t d = r.u32();
    if (d != p.latent_dim) throw FormatError(r.name() + ": signature dimension mismatch");
    s.mean.resize(d);
    s.eigvals.resize(d);
    s.eigvecs = Matrix(d, d);
    for (auto& v : s.mean) v = r.f32();
    for (auto& v : s.eigvals) v = r.f32();
    for (auto& v : s.eigvecs.data()) v = r.f32();
  }
  r.finish();
  return TaskExpert::restore(task_id, std::move(p), std::move(km), std::move(sigs));
}

inline std::vector<std::uint8_t> encode_router(const Router& router) {
  Writer w;
  w.bytes("UTTA", 4);
  w.u8(kVersion);
  w.u8(router.ce ? 1 : 0);
  if (router.ce) {
    w.size(router.ce->tasks);
    w.u8(router.ce->identity ? 1 : 0);
    if (!router.ce->identity) put_mlp(w, router.ce->net);
  }
  w.u8(router.cos ? 1 : 0);
  if (router.cos) {
    const auto& c = *router.cos;
    w.u8(static_cast<std::uint8_t>(c.mode));
    w.size(c.prototypes.size());
    for (const auto& p : c.prototypes) {
      w.size(p.size());
      w.f64s(p);
    }
    w.size(c.sets.size());
    for (const auto& s : c.sets) put_matrix(w, s);
  }
  return w.buffer();
}

inline Router decode_router(Reader r) {
  r.expect("UTTA");
  Router router;
  if (r.u8()) {
    assigner::CeModel m;
    m.tasks = r.u32();
    m.identity = r.u8() != 0;
    if (!m.identity) m.net = get_mlp(r);
    router.ce = std::move(m);
  }
  if (r.u8()) {
    assigner::CosineModel c;
    const std::uint8_t mode = r.u8();
    if (mode > 1) throw FormatError(r.name() + ": bad cosine mode");
    c.mode = static_cast<assigner::CosineMode>(mode);
    c.prototypes.resize(r.u32());
    for (auto& p : c.prototypes) {
      p.resize(r.u32());
      r.f64s(p);
    }
    c.sets.resize(r.u32());
    for (auto& s : c.sets) s = get_matrix(r);
    router.cos = std::move(c);
  }
  r.finish();
  return router;
}

inline std::uint32_t crc(const std::vector<std::uint8_t>& b) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), b.data(), static_cast<uInt>(b.size())));
}

inline std::string hex32(std::uint32_t v) {
  char s[9];
  std::snprintf(s, sizeof s, "%08x", v);
  return s;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw FormatError("cannot write " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string expert_file(std::size_t task_id) {
  char s[32];
  std::snprintf(s, sizeof s, "expert_%04zu.bin", task_id);
  return s;
}

}  // namespace store_detail

struct SaveInfo {
  std::size_t signature_bytes = 0;  // float32 signature payload over all experts
  std::size_t total_bytes = 0;
};

/// Writes the store into `dir`, replacing an existing store there.
inline SaveInfo save_store(const ModelStore& m, const std::filesystem::path& dir) {
  using namespace store_detail;
  std::filesystem::create_directories(dir);
  SaveInfo info;
  std::ostringstream manifest;
  manifest << "utell-store " << int{kVersion} << '\n'
           << "scenario " << (m.scenario == streams::Scenario::class_il ? "class_il" : "domain_il") << '\n'
           << "tasks " << m.experts.size() << '\n'
           << "image_shape " << m.image_rows << ' ' << m.image_cols << '\n';
  auto add = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    write_file(dir / name, bytes);
    info.total_bytes += bytes.size();
    manifest << "file " << name << ' ' << bytes.size() << ' ' << hex32(crc(bytes)) << '\n';
  };
  for (const auto& e : m.experts) {
    auto [bytes, payload] = encode_expert(e);
    info.signature_bytes += payload;
    add(expert_file(e.task_id()), bytes);
  }
  add("assigner.bin", encode_router(m.router));
  manifest << "signature_bytes " << info.signature_bytes << '\n';
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  out << manifest.str();
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  return info;
}

/// Loads and verifies a store written by save_store.
inline ModelStore load_store(const std::filesystem::path& dir) {
  using namespace store_detail;
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw FormatError("no manifest in " + dir.string());
  ModelStore m;
  std::string key, line;
  std::size_t tasks = 0;
  std::map<std::string, std::pair<std::size_t, std::string>> files;
  bool header = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    if (key == "utell-store") {
      int v = 0;
      ls >> v;
      if (v != kVersion) throw FormatError("manifest: unsupported version");
      header = true;
    } else if (key == "scenario") {
      std::string s;
      ls >> s;
      if (s != "class_il" && s != "domain_il") throw FormatError("manifest: bad scenario");
      m.scenario = s == "class_il" ? streams::Scenario::class_il : streams::Scenario::domain_il;
    } else if (key == "tasks") {
      ls >> tasks;
    } else if (key == "image_shape") {
      ls >> m.image_rows >> m.image_cols;
    } else if (key == "file") {
      std::string name, sum;
      std::size_t size = 0;
      if (!(ls >> name >> size >> sum)) throw FormatError("manifest: malformed file line");
      files[name] = {size, sum};
    } else if (key != "signature_bytes") {
      throw FormatError("manifest: unknown key " + key);
    }
  }
  if (!header) throw FormatError("manifest: missing header");

  auto verified = [&](const std::string& name) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("manifest: missing entry for " + name);
    auto bytes = read_file(dir / name);
    if (bytes.size() != it->second.first || hex32(crc(bytes)) != it->second.second)
      throw FormatError("checksum mismatch for " + name);
    return Reader(std::move(bytes), name);
  };
  for (std::size_t t = 1; t <= tasks; ++t) {
    TaskExpert e = decode_expert(verified(expert_file(t)));
    if (e.task_id() != t) throw FormatError(expert_file(t) + ": task id mismatch");
    m.experts.append(std::move(e));
  }
  m.router = decode_router(verified("assigner.bin"));
  return m;
}

}  // namespace utell
