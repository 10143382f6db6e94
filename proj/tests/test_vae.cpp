#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "utell/dense.hpp"
#include "utell/error.hpp"
#include "utell/vae.hpp"

using namespace utell;

namespace {

vae::Architecture toy(vae::Reconstruction rec) {
  vae::Architecture a;
  a.reconstruction = rec;
  a.input_dim = 6;
  a.latent_dim = 2;
  a.encoder_hidden = {5, 4};
  a.decoder_hidden = {4, 5};
  a.beta = 4.0;
  return a;
}

Matrix toy_batch(Rng& rng, std::size_t n) {
  Matrix x(n, 6);
  for (auto& v : x.data()) v = rng.uniform(0.05, 0.95);
  return x;
}

}  // namespace

TEST(Dense, ForwardOfKnownLayer) {
  Mlp m;
  m.hidden = Activation::tanh;
  m.output = Activation::identity;
  m.layers.push_back({Matrix{{1, -1}, {0.5, 2}}, Vector{0.1, -0.2}});
  const Matrix y = m.forward(Matrix{{1, 2}});
  EXPECT_DOUBLE_EQ(y(0, 0), 2.1);
  EXPECT_DOUBLE_EQ(y(0, 1), 2.8);
  m.output = Activation::sigmoid;
  EXPECT_NEAR(m.forward(Matrix{{0, 0}})(0, 0), 1.0 / (1.0 + std::exp(-0.1)), 1e-15);
}

TEST(Dense, SigmoidIsStableForLargeInputs) {
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
}

TEST(Dense, ClipGlobalNorm) {
  Vector a{3, 0}, b{0, 4};
  std::vector<std::span<double>> g{a, b};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(a[0], 0.6, 1e-15);
  EXPECT_NEAR(b[1], 0.8, 1e-15);
  Vector c{0.1};
  std::vector<std::span<double>> h{c};
  clip_global_norm(h, 1.0);
  EXPECT_EQ(c[0], 0.1);
}

TEST(Dense, SgdMomentumUpdate) {
  Vector p{1.0}, g{0.5};
  std::vector<std::span<double>> ps{p}, gs{g};
  SgdMomentum opt(0.1, 0.9);
  opt.step(ps, gs);  // v = 0.5, p = 0.95
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  opt.step(ps, gs);  // v = 0.95, p = 0.855
  EXPECT_NEAR(p[0], 0.855, 1e-15);
}

TEST(Vae, KlOfStandardNormalIsZero) {
  const Vector mu{0, 0, 0}, lv{0, 0, 0};
  EXPECT_EQ(vae::kl_standard_normal(mu, lv), 0.0);
  // closed form: 0.5 * (mu^2 + e^lv - lv - 1)
  const Vector m2{1.0}, l2{std::log(2.0)};
  EXPECT_NEAR(vae::kl_standard_normal(m2, l2), 0.5 * (1 + 2 - std::log(2.0) - 1), 1e-15);
}

TEST(Vae, LossByHandOnOneSample) {
  Rng rng(1);
  auto p = vae::init_params(toy(vae::Reconstruction::squared_error), rng);
  const Matrix x = toy_batch(rng, 1);
  const Matrix noise(1, 2, 0.0);
  const auto out = vae::forward(p, x, noise);
  EXPECT_EQ(out.z, out.posterior.mean);  // zero noise
  double recon = 0;
  for (std::size_t j = 0; j < 6; ++j) recon += std::pow(x(0, j) - out.reconstruction(0, j), 2);
  const double kl = vae::kl_standard_normal(out.posterior.mean.row(0), out.posterior.logvar.row(0));
  const auto t = vae::beta_vae_loss(p, x, noise);
  EXPECT_NEAR(t.recon, recon, 1e-14);
  EXPECT_NEAR(t.kl, kl, 1e-14);
  EXPECT_NEAR(t.loss, recon + 4.0 * kl, 1e-13);
}

TEST(Vae, GradientMatchesFiniteDifferencesSquaredError) {
  Rng rng(3);
  auto p = vae::init_params(toy(vae::Reconstruction::squared_error), rng);
  const Matrix x = toy_batch(rng, 4);
  const Matrix noise = standard_normal(rng, 4, 2);
  const auto r = test::check_vae_gradient(p, x, noise);
  EXPECT_EQ(r.checked, p.parameter_count());
  EXPECT_LE(r.worst_rel, 1e-4);
}

TEST(Vae, GradientMatchesFiniteDifferencesBernoulli) {
  Rng rng(4);
  auto p = vae::init_params(toy(vae::Reconstruction::bernoulli), rng);
  const Matrix x = toy_batch(rng, 3);
  const Matrix noise = standard_normal(rng, 3, 2);
  EXPECT_LE(test::check_vae_gradient(p, x, noise).worst_rel, 1e-4);
}

TEST(Vae, KlWeightOverridesBetaInGradientOnly) {
  Rng rng(5);
  auto p = vae::init_params(toy(vae::Reconstruction::squared_error), rng);
  const Matrix x = toy_batch(rng, 2);
  const Matrix noise = standard_normal(rng, 2, 2);
  const auto full = vae::backward(p, x, noise);
  const auto zero = vae::backward(p, x, noise, 0.0);
  EXPECT_EQ(full.terms.loss, zero.terms.loss);
  EXPECT_FALSE(full.grads == zero.grads);
  // decoder gradients do not depend on the KL weight
  EXPECT_EQ(full.grads.decoder, zero.grads.decoder);
}

TEST(Vae, TrainingReducesLossAndIsDeterministic) {
  Rng data_rng(6);
  Matrix x(64, 6);
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = (r % 2 == 0) == (c < 3) ? 0.9 : 0.1;
  vae::TrainConfig cfg{40, 8, 5e-2, 0.9, 0, 0.0};
  auto arch = toy(vae::Reconstruction::squared_error);
  arch.beta = 0.5;
  Rng r1(7), r2(7);
  auto a = vae::train(vae::init_params(arch, r1), x, cfg, r1);
  auto b = vae::train(vae::init_params(arch, r2), x, cfg, r2);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  ASSERT_EQ(a.loss_trace.size(), 40u);
  EXPECT_LT(a.loss_trace.back(), 0.75 * a.loss_trace.front());
}

TEST(Vae, DivergenceRaisesTrainingErrorWithEpoch) {
  Rng rng(8);
  auto p = vae::init_params(toy(vae::Reconstruction::squared_error), rng);
  p.encoder.layers[0].weight(0, 0) = std::nan("");
  const Matrix x = toy_batch(rng, 8);
  try {
    vae::train(p, x, {3, 4, 1e-2, 0.9, 0, 0.0}, rng);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
  }
}

TEST(Vae, ShapeErrors) {
  Rng rng(9);
  auto p = vae::init_params(toy(vae::Reconstruction::squared_error), rng);
  EXPECT_THROW(vae::encode(p, Matrix(2, 5)), DimensionError);
  EXPECT_THROW(vae::decode(p, Matrix(2, 3)), DimensionError);
  EXPECT_THROW(vae::beta_vae_loss(p, Matrix(0, 6), rng), EmptyInputError);
  EXPECT_THROW(vae::forward(p, Matrix(2, 6), Matrix(2, 3)), DimensionError);
  auto bad = toy(vae::Reconstruction::squared_error);
  bad.latent_dim = 0;
  EXPECT_THROW(vae::init_params(bad, rng), DimensionError);
}
