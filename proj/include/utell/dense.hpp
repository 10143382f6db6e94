#pragma once

// Fully-connected stacks with hand-written forward/backward passes and an
// SGD + momentum optimiser. Activations are row-major (one sample per row).

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell {

enum class Activation { identity, tanh, sigmoid };

struct DenseLayer {
  Matrix weight;  // fan_in x fan_out
  Vector bias;    // fan_out

  std::size_t fan_in() const noexcept { return weight.rows(); }
  std::size_t fan_out() const noexcept { return weight.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

inline double sigmoid(double x) noexcept {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline void activate(Matrix& m, Activation act) {
  switch (act) {
    case Activation::identity: break;
    case Activation::tanh:
      for (auto& v : m.data()) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (auto& v : m.data()) v = sigmoid(v);
      break;
  }
}

/// Multiplies `grad` in place by the activation derivative, expressed via the activation output.
inline void activation_backward(Matrix& grad, const Matrix& out, Activation act) {
  auto& g = grad.data();
  const auto& y = out.data();
  switch (act) {
    case Activation::identity: break;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
  }
}

/// A stack of dense layers: `hidden` activation between layers, `output` on the last one.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation hidden = Activation::tanh;
  Activation output = Activation::identity;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().fan_in(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().fan_out(); }

  /// Layer widths, e.g. {784, 256, 128, 128}. Weights uniform in +-1/sqrt(fan_in), zero biases.
  static Mlp create(std::span<const std::size_t> widths, Activation hidden, Activation output, Rng& rng) {
    if (widths.size() < 2) throw DimensionError("Mlp needs at least input and output widths");
    Mlp m;
    m.hidden = hidden;
    m.output = output;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      if (widths[l] == 0 || widths[l + 1] == 0) throw DimensionError("Mlp layer width must be positive");
      DenseLayer layer{Matrix(widths[l], widths[l + 1]), Vector(widths[l + 1], 0.0)};
      const double limit = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      for (auto& w : layer.weight.data()) w = rng.uniform(-limit, limit);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  /// Same shapes, all parameters zero.
  Mlp zeros_like() const {
    Mlp z = *this;
    for (auto& l : z.layers) {
      std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return z;
  }

  Activation activation_of(std::size_t layer) const { return layer + 1 == layers.size() ? output : hidden; }

  Matrix forward(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) a = layer_forward(a, l);
    return a;
  }

  /// Returns every activation, index 0 being the input.
  std::vector<Matrix> forward_cached(const Matrix& x) const {
    std::vector<Matrix> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < layers.size(); ++l) acts.push_back(layer_forward(acts.back(), l));
    return acts;
  }

  /// Back-propagates dL/d(output) through the cached pass. Gradients are accumulated into `grads`.
  /// With `grad_is_preactivation` the incoming gradient is already taken w.r.t. the last
  /// layer's pre-activation. Returns dL/d(input).
  Matrix backward(const std::vector<Matrix>& acts, Matrix grad_out, Mlp& grads,
                  bool grad_is_preactivation = false) const {
    Matrix g = std::move(grad_out);
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (!(grad_is_preactivation && l + 1 == layers.size())) activation_backward(g, acts[l + 1], activation_of(l));
      Matrix dw = matmul_tn(acts[l], g);
      auto& gw = grads.layers[l].weight.data();
      for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.data()[i];
      auto& gb = grads.layers[l].bias;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto row = g.row(r);
        for (std::size_t c = 0; c < gb.size(); ++c) gb[c] += row[c];
      }
      g = matmul_nt(g, layers[l].weight);
    }
    return g;
  }

  /// Flat views of every parameter array, in a fixed order.
  std::vector<std::span<double>> parameter_spans() {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
      out.emplace_back(l.weight.data());
      out.emplace_back(l.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.all_finite()) return false;
      for (double b : l.bias)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

private:
  Matrix layer_forward(const Matrix& a, std::size_t l) const {
    const auto& layer = layers[l];
    if (a.cols() != layer.fan_in())
      throw DimensionError("layer " + std::to_string(l) + " expects " + std::to_string(layer.fan_in()) +
                           " inputs, got " + std::to_string(a.cols()));
    Matrix out = matmul(a, layer.weight);
    add_row_vector(out, layer.bias);
    activate(out, activation_of(l));
    return out;
  }
};

/// Rescales the gradient set so its joint L2 norm is at most `max_norm`. Returns the original norm.
inline double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (auto& v : g) v *= scale;
  }
  return norm;
}

/// Heavy-ball SGD: v <- momentum * v + g ; p <- p - lr * v.
class SgdMomentum {
public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads) {
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& v = velocity_[k];
      const auto g = grads[k];
      const auto p = params[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        p[i] -= lr_ * v[i];
      }
    }
  }

private:
  double lr_;
  double momentum_;
  std::vector<Vector> velocity_;
};

}  // namespace utell
