#pragma once

// Beta-VAE with fully-connected encoder/decoder and manual backprop.
//
// Encoder: input -> hidden... -> 2d (first d outputs are the posterior mean,
// the last d the log-variance). Decoder: d -> hidden... -> input, sigmoid out.
// Loss per batch, averaged over samples:
//   recon = sum_pixels (x - x_hat)^2        (or summed binary cross-entropy)
//   kl    = -1/2 sum_latent (1 + logvar - mean^2 - exp(logvar))
//   loss  = recon + beta * kl

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "utell/dense.hpp"
#include "utell/error.hpp"
#include "utell/numerics.hpp"
#include "utell/rng.hpp"

namespace utell::vae {

/// Reconstruction likelihood. squared_error is sum_pixels (x - x_hat)^2,
/// bernoulli is the summed binary cross-entropy -[x log x_hat + (1 - x) log(1 - x_hat)].
enum class Reconstruction { squared_error, bernoulli };

struct Architecture {
  Reconstruction reconstruction = Reconstruction::bernoulli;
  std::size_t input_dim = 784;
  std::size_t latent_dim = 64;
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::vector<std::size_t> decoder_hidden{128, 256};
  double beta = 4.0;
};

struct Params {
  Reconstruction reconstruction = Reconstruction::squared_error;
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
  double beta = 4.0;
  Mlp encoder;
  Mlp decoder;

  std::vector<std::span<double>> parameter_spans() {
    auto out = encoder.parameter_spans();
    auto dec = decoder.parameter_spans();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  std::size_t parameter_count() const { return encoder.parameter_count() + decoder.parameter_count(); }
  bool all_finite() const { return encoder.all_finite() && decoder.all_finite(); }

  Params zeros_like() const {
    Params z = *this;
    z.encoder = encoder.zeros_like();
    z.decoder = decoder.zeros_like();
    return z;
  }

  friend bool operator==(const Params&, const Params&) = default;
};

inline Params init_params(const Architecture& arch, Rng& rng) {
  if (arch.input_dim == 0 || arch.latent_dim == 0) throw DimensionError("vae: dimensions must be positive");
  if (!(arch.beta > 0.0)) throw ConfigError("vae: beta must be > 0");
  std::vector<std::size_t> enc{arch.input_dim};
  enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  enc.push_back(2 * arch.latent_dim);
  std::vector<std::size_t> dec{arch.latent_dim};
  dec.insert(dec.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
  dec.push_back(arch.input_dim);

  Params p;
  p.reconstruction = arch.reconstruction;
  p.input_dim = arch.input_dim;
  p.latent_dim = arch.latent_dim;
  p.beta = arch.beta;
  p.encoder = Mlp::create(enc, Activation::tanh, Activation::identity, rng);
  p.decoder = Mlp::create(dec, Activation::tanh, Activation::sigmoid, rng);
  return p;
}

struct Posterior {
  Matrix mean;    // n x d
  Matrix logvar;  // n x d
};

namespace detail {

inline Posterior split_head(const Matrix& head, std::size_t d) {
  Posterior post{Matrix(head.rows(), d), Matrix(head.rows(), d)};
  for (std::size_t r = 0; r < head.rows(); ++r) {
    const auto h = head.row(r);
    std::copy(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(d), post.mean.row(r).begin());
    std::copy(h.begin() + static_cast<std::ptrdiff_t>(d), h.end(), post.logvar.row(r).begin());
  }
  return post;
}

inline void check_input(const Params& p, const Matrix& x) {
  if (x.cols() != p.input_dim)
    throw DimensionError("vae: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(p.input_dim));
}

}  // namespace detail

inline Posterior encode(const Params& p, const Matrix& x) {
  detail::check_input(p, x);
  return detail::split_head(p.encoder.forward(x), p.latent_dim);
}

/// Single-sample convenience overload.
inline std::pair<Vector, Vector> encode(const Params& p, std::span<const double> x) {
  Matrix m(1, x.size(), Vector(x.begin(), x.end()));
  auto post = encode(p, m);
  return {post.mean.row_vector(0), post.logvar.row_vector(0)};
}

inline Matrix decode(const Params& p, const Matrix& z) {
  if (z.cols() != p.latent_dim)
    throw DimensionError("vae: latent has " + std::to_string(z.cols()) + " columns, expected " +
                         std::to_string(p.latent_dim));
  return p.decoder.forward(z);
}

inline Vector decode(const Params& p, std::span<const double> z) {
  Matrix m(1, z.size(), Vector(z.begin(), z.end()));
  return decode(p, m).row_vector(0);
}

struct LossTerms {
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Closed-form KL(N(mean, exp(logvar)) || N(0, I)) for one diagonal Gaussian.
inline double kl_standard_normal(std::span<const double> mean, std::span<const double> logvar) {
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i)
    s += 1.0 + logvar[i] - mean[i] * mean[i] - std::exp(logvar[i]);
  return -0.5 * s;
}

struct Output {
  Posterior posterior;
  Matrix z;
  Matrix reconstruction;
};

/// Forward pass with the reparameterisation z = mean + exp(logvar / 2) * noise.
inline Output forward(const Params& p, const Matrix& x, const Matrix& noise) {
  auto post = encode(p, x);
  if (noise.rows() != x.rows() || noise.cols() != p.latent_dim) throw DimensionError("vae: noise shape mismatch");
  Matrix z = post.mean;
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += std::exp(0.5 * post.logvar.data()[i]) * noise.data()[i];
  Matrix xr = decode(p, z);
  return {std::move(post), std::move(z), std::move(xr)};
}

inline LossTerms loss_terms(const Params& p, const Matrix& x, const Output& out) {
  const std::size_t n = x.rows();
  double recon = 0.0;
  const auto& xr = out.reconstruction.data();
  if (p.reconstruction == Reconstruction::squared_error) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = xr[i] - x.data()[i];
      recon += e * e;
    }
  } else {
    constexpr double eps = 1e-12;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double y = std::clamp(xr[i], eps, 1.0 - eps);
      const double t = x.data()[i];
      recon -= t * std::log(y) + (1.0 - t) * std::log(1.0 - y);
    }
  }
  double kl = 0.0;
  for (std::size_t r = 0; r < n; ++r) kl += kl_standard_normal(out.posterior.mean.row(r), out.posterior.logvar.row(r));
  LossTerms t;
  t.recon = recon / static_cast<double>(n);
  t.kl = kl / static_cast<double>(n);
  t.loss = t.recon + p.beta * t.kl;
  return t;
}

/// Loss with caller-supplied reparameterisation noise (n x d).
inline LossTerms beta_vae_loss(const Params& p, const Matrix& batch, const Matrix& noise) {
  if (batch.rows() == 0) throw EmptyInputError("beta_vae_loss: empty batch");
  return loss_terms(p, batch, forward(p, batch, noise));
}

inline LossTerms beta_vae_loss(const Params& p, const Matrix& batch, Rng& rng) {
  if (batch.rows() == 0) throw EmptyInputError("beta_vae_loss: empty batch");
  return beta_vae_loss(p, batch, standard_normal(rng, batch.rows(), p.latent_dim));
}

struct Gradient {
  LossTerms terms;
  Params grads;  // same shapes as the parameters
};

/// Analytic gradient of beta_vae_loss for a fixed noise draw. A non-negative
/// `kl_weight` replaces beta in the gradient (used for KL warm-up); the reported
/// loss terms always use beta.
inline Gradient backward(const Params& p, const Matrix& batch, const Matrix& noise, double kl_weight = -1.0) {
  if (batch.rows() == 0) throw EmptyInputError("backward: empty batch");
  detail::check_input(p, batch);
  const std::size_t n = batch.rows();
  const std::size_t d = p.latent_dim;
  const double inv_n = 1.0 / static_cast<double>(n);

  const auto enc_acts = p.encoder.forward_cached(batch);
  const auto post = detail::split_head(enc_acts.back(), d);
  Matrix stdev(n, d);
  Matrix z = post.mean;
  for (std::size_t i = 0; i < z.size(); ++i) {
    stdev.data()[i] = std::exp(0.5 * post.logvar.data()[i]);
    z.data()[i] += stdev.data()[i] * noise.data()[i];
  }
  const auto dec_acts = p.decoder.forward_cached(z);
  const Matrix& xr = dec_acts.back();

  Gradient out{{}, p.zeros_like()};
  out.terms = loss_terms(p, batch, Output{post, z, xr});

  // gradient w.r.t. the decoder's output pre-activation
  Matrix g_logit(n, p.input_dim);
  for (std::size_t i = 0; i < g_logit.size(); ++i) {
    const double y = xr.data()[i];
    const double e = y - batch.data()[i];
    g_logit.data()[i] =
        p.reconstruction == Reconstruction::squared_error ? 2.0 * inv_n * e * y * (1.0 - y) : inv_n * e;
  }
  const Matrix g_z = p.decoder.backward(dec_acts, std::move(g_logit), out.grads.decoder, true);

  Matrix g_head(n, 2 * d);
  const double kl_scale = (kl_weight >= 0.0 ? kl_weight : p.beta) * inv_n;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = post.mean(r, j);
      const double lv = post.logvar(r, j);
      const double gz = g_z(r, j);
      g_head(r, j) = gz + kl_scale * mu;
      g_head(r, d + j) = gz * noise(r, j) * 0.5 * stdev(r, j) + kl_scale * 0.5 * (std::exp(lv) - 1.0);
    }
  }
  p.encoder.backward(enc_acts, std::move(g_head), out.grads.encoder);
  return out;
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t kl_warmup_epochs = 0;  // KL weight ramps linearly to beta over these epochs
  double clip_norm = 0.0;            // global gradient-norm clip, 0 disables
};

struct TrainResult {
  Params params;
  std::vector<double> loss_trace;  // mean batch loss per epoch
};

/// Mini-batch SGD with momentum. Throws TrainingError if the loss or parameters go non-finite.
inline TrainResult train(Params params, const Matrix& data, const TrainConfig& cfg, Rng& rng) {
  if (data.rows() == 0) throw EmptyInputError("vae::train: no data");
  detail::check_input(params, data);
  if (cfg.batch_size == 0) throw ConfigError("vae::train: batch_size must be >= 1");

  TrainResult result{std::move(params), {}};
  SgdMomentum opt(cfg.lr, cfg.momentum);
  std::vector<std::size_t> order(data.rows());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const Matrix batch = data.gather_rows(std::span(order).subspan(start, count));
      const Matrix noise = standard_normal(rng, count, result.params.latent_dim);
      const double kl_weight =
          cfg.kl_warmup_epochs == 0
              ? result.params.beta
              : result.params.beta * std::min(1.0, static_cast<double>(e + 1) / static_cast<double>(cfg.kl_warmup_epochs));
      auto g = backward(result.params, batch, noise, kl_weight);
      if (!std::isfinite(g.terms.loss)) throw TrainingError(e, "non-finite loss");
      total += g.terms.loss;
      ++batches;
      auto ps = result.params.parameter_spans();
      auto gs = g.grads.parameter_spans();
      if (cfg.clip_norm > 0.0) clip_global_norm(gs, cfg.clip_norm);
      opt.step(ps, gs);
    }
    const double mean_loss = total / static_cast<double>(batches);
    if (!std::isfinite(mean_loss) || !result.params.all_finite()) throw TrainingError(e, "non-finite parameters");
    result.loss_trace.push_back(mean_loss);
  }
  return result;
}

}  // namespace utell::vae
