#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>

#include "utell/numerics.hpp"
#include "utell/rng.hpp"
#include "utell/vae.hpp"

namespace utell::test {

/// Random SPD matrix: A A^T / d + shift I.
inline Matrix random_spd(Rng& rng, std::size_t d, double shift = 0.1) {
  const Matrix a = standard_normal(rng, d, d);
  Matrix q = matmul_nt(a, a);
  for (auto& v : q.data()) v /= static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) q(i, i) += shift;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) q(i, j) = q(j, i);
  return q;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

struct GradCheck {
  double worst_rel = 0.0;
  std::size_t checked = 0;
};

/// Central differences (step h) against vae::backward for every parameter.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheck check_vae_gradient(vae::Params p, const Matrix& x, const Matrix& noise, double h = 1e-5) {
  const auto analytic = vae::backward(p, x, noise);
  vae::Params g = analytic.grads;
  auto ps = p.parameter_spans();
  auto gs = g.parameter_spans();
  GradCheck out;
  for (std::size_t s = 0; s < ps.size(); ++s)
    for (std::size_t i = 0; i < ps[s].size(); ++i) {
      const double keep = ps[s][i];
      ps[s][i] = keep + h;
      const double up = vae::beta_vae_loss(p, x, noise).loss;
      ps[s][i] = keep - h;
      const double down = vae::beta_vae_loss(p, x, noise).loss;
      ps[s][i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = gs[s][i];
      out.worst_rel = std::max(out.worst_rel, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
      ++out.checked;
    }
  return out;
}

/// Optimal two-cluster inertia by enumerating every split into two non-empty groups.
inline double brute_force_inertia_2(const Matrix& z) {
  const std::size_t n = z.rows(), d = z.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    if (mask & 1) continue;  // each split once: point 0 always in group 0
    double total = 0.0;
    for (int g = 0; g < 2; ++g) {
      Vector mu(d, 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(g)) {
          for (std::size_t c = 0; c < d; ++c) mu[c] += z(i, c);
          ++count;
        }
      for (auto& v : mu) v /= static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(g)) total += squared_distance(z.row(i), mu);
    }
    best = std::min(best, total);
  }
  return best;
}

}  // namespace utell::test
