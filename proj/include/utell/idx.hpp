#pragma once

// IDX (MNIST layout) reader and writer. Files ending in ".gz" go through zlib.
//
// images: 0x00000803 | count | rows | cols | count*rows*cols unsigned bytes
// labels: 0x00000801 | count | count unsigned bytes
// All header integers are big-endian.

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "utell/error.hpp"
#include "utell/numerics.hpp"

namespace utell::idx {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

namespace detail {

inline bool is_gz(const std::string& path) { return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0; }

inline std::vector<std::uint8_t> read_all(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open " + path);
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw FormatError("corrupt gzip stream in " + path);
    return bytes;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_all(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (!f) throw FormatError("cannot write " + path);
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) throw FormatError("short write to " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(c));
}

}  // namespace detail

struct ImageSet {
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  Matrix pixels;  // count x (rows*cols), values in [0, 1]
};

inline ImageSet read_images(const std::string& path) {
  const auto b = detail::read_all(path);
  if (b.size() < 16) throw FormatError(path + ": truncated IDX image header");
  if (detail::be32(b, 0) != kImageMagic) throw FormatError(path + ": bad IDX image magic");
  const std::size_t n = detail::be32(b, 4), rows = detail::be32(b, 8), cols = detail::be32(b, 12);
  const std::size_t px = rows * cols;
  if (b.size() - 16 < n * px) throw FormatError(path + ": truncated IDX image payload");
  ImageSet set{rows, cols, Matrix(n, px)};
  auto& out = set.pixels.data();
  for (std::size_t i = 0; i < n * px; ++i) out[i] = static_cast<double>(b[16 + i]) / 255.0;
  return set;
}

inline std::vector<int> read_labels(const std::string& path) {
  const auto b = detail::read_all(path);
  if (b.size() < 8) throw FormatError(path + ": truncated IDX label header");
  if (detail::be32(b, 0) != kLabelMagic) throw FormatError(path + ": bad IDX label magic");
  const std::size_t n = detail::be32(b, 4);
  if (b.size() - 8 < n) throw FormatError(path + ": truncated IDX label payload");
  return std::vector<int>(b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

struct Dataset {
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  Matrix images;
  std::vector<int> labels;
};

inline Dataset load(const std::string& images_path, const std::string& labels_path) {
  auto img = read_images(images_path);
  auto lab = read_labels(labels_path);
  if (img.pixels.rows() != lab.size())
    throw FormatError("IDX count mismatch: " + std::to_string(img.pixels.rows()) + " images vs " +
                      std::to_string(lab.size()) + " labels");
  return {img.image_rows, img.image_cols, std::move(img.pixels), std::move(lab)};
}

inline void write_images(const std::string& path, const Matrix& pixels, std::size_t rows, std::size_t cols) {
  if (rows * cols != pixels.cols()) throw DimensionError("write_images: rows*cols != row length");
  std::vector<std::uint8_t> b;
  b.reserve(16 + pixels.size());
  detail::put_be32(b, kImageMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(pixels.rows()));
  detail::put_be32(b, static_cast<std::uint32_t>(rows));
  detail::put_be32(b, static_cast<std::uint32_t>(cols));
  for (double v : pixels.data()) b.push_back(detail::to_byte(v));
  detail::write_all(path, b);
}

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kLabelMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw FormatError("write_labels: label out of byte range");
    b.push_back(static_cast<std::uint8_t>(l));
  }
  detail::write_all(path, b);
}

}  // namespace utell::idx
