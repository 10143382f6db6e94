#pragma once

// Dense row-major matrices, the handful of BLAS-like kernels the models need,
// and a cyclic Jacobi eigensolver for symmetric matrices.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "utell/error.hpp"
#include "utell/rng.hpp"

namespace utell {

using Vector = std::vector<double>;

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  static Matrix from_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols()) throw DimensionError("ragged row list");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Vector row_vector(std::size_t r) const { return Vector(row(r).begin(), row(r).end()); }
  Vector col_vector(std::size_t c) const {
    Vector v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
    return v;
  }

  /// Rows [first, first + count) as a new matrix.
  Matrix slice_rows(std::size_t first, std::size_t count) const {
    Matrix m(count, cols_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_, m.data_.begin());
    return m;
  }

  Matrix gather_rows(std::span<const std::size_t> idx) const {
    Matrix m(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy(row(idx[i]).begin(), row(idx[i]).end(), m.row(i).begin());
    return m;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Stacks matrices with equal column counts vertically.
inline Matrix vstack(std::span<const Matrix> parts) {
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (cols != 0 && p.cols() != cols) throw DimensionError("vstack: column mismatch");
    cols = p.cols();
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
    r += p.rows();
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row mismatch");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* bk = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

/// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column mismatch");
  return matmul(a, transpose(b));
}

/// Column-wise mean of a sample matrix (one sample per row).
inline Vector mean_rows(const Matrix& samples) {
  if (samples.rows() == 0) throw EmptyInputError("mean_rows: no samples");
  Vector m(samples.cols(), 0.0);
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const auto row = samples.row(r);
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += row[c];
  }
  for (auto& v : m) v /= static_cast<double>(samples.rows());
  return m;
}

inline void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw DimensionError("add_row_vector: length mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < v.size(); ++c) row[c] += v[c];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

inline double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, std::abs(v));
  return best;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix subtraction: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

/// Population covariance (1/N normalisation) of the rows around `mean`.
inline Matrix covariance(const Matrix& samples, std::span<const double> mean) {
  const std::size_t d = samples.cols();
  Matrix centered = samples;
  for (std::size_t r = 0; r < centered.rows(); ++r) {
    auto row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= mean[c];
  }
  Matrix q = matmul_tn(centered, centered);
  const double inv_n = 1.0 / static_cast<double>(samples.rows());
  for (auto& v : q.data()) v *= inv_n;
  // symmetrise away rounding so downstream symmetry checks are exact
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) q(j, i) = q(i, j);
  return q;
}

/// n x d matrix of i.i.d. standard normal draws.
inline Matrix standard_normal(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// `tol` bounds the accepted asymmetry relative to the largest entry.
inline EigenDecomposition sym_eig(const Matrix& q, double tol = 1e-8, int max_sweeps = 100) {
  if (q.rows() != q.cols())
    throw DimensionError("sym_eig: matrix is " + std::to_string(q.rows()) + "x" + std::to_string(q.cols()));
  const std::size_t n = q.rows();
  const double scale = std::max(1.0, max_abs(q));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(q(i, j) - q(j, i)) > tol * scale) throw SymmetryError("sym_eig: matrix is not symmetric");

  Matrix a = q;
  Matrix v = Matrix::identity(n);
  const double total = frobenius_norm(a);

  auto off_diagonal = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
  };

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    const double off = off_diagonal();
    if (off == 0.0 || off <= 1e-14 * total) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (apr == 0.0) continue;
        const double app = a(p, p), arr = a(r, r);
        const double theta = (arr - app) / (2.0 * apr);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        a(p, p) = app - t * apr;
        a(r, r) = arr + t * apr;
        a(p, r) = a(r, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == r) continue;
          const double akp = a(k, p), akr = a(k, r);
          const double nkp = akp - s * (akr + tau * akp);
          const double nkr = akr + s * (akp - tau * akr);
          a(k, p) = a(p, k) = nkp;
          a(k, r) = a(r, k) = nkr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkr = v(k, r);
          v(k, p) = vkp - s * (vkr + tau * vkp);
          v(k, r) = vkr + s * (vkp - tau * vkr);
        }
      }
    }
  }
  if (sweep == max_sweeps && off_diagonal() > 1e-14 * total)
    throw ConvergenceError("sym_eig: no convergence after " + std::to_string(max_sweeps) + " sweeps");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

/// Raises eigenvalues below tol * lambda_max (or tol when lambda_max <= 0) to that floor.
inline void clamp_eigenvalues(Vector& values, double tol = 1e-8) {
  const double top = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  const double floor = top > 0.0 ? tol * top : tol;
  for (auto& v : values) v = std::max(v, floor);
}

}  // namespace utell
