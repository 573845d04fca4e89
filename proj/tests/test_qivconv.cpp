#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "qivc/error.hpp"
#include "qivc/qivconv.hpp"

using namespace qivc;

namespace {

VariationalKernel make_kernel(std::size_t k, std::size_t cin, std::size_t cout, Rng& rng, double rho_scale = 1.0) {
  VariationalKernel vk;
  vk.mu_w = oracle::random_tensor({k, cin, cout}, rng);
  vk.rho_w = oracle::random_tensor({k, cin, cout}, rng, true, rho_scale);
  vk.mu_b = oracle::random_tensor({cout}, rng);
  vk.rho_b = oracle::random_tensor({cout}, rng, true, rho_scale);
  return vk;
}

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

double kl_element(double mu, double sigma, double prior_var) {
  return (sigma * sigma + mu * mu) / (2 * prior_var) - std::log(sigma + 1e-8) + 0.5 * std::log(prior_var) - 0.5;
}

VariationalKernel constant_kernel(double mu, double sigma, std::size_t n = 4) {
  VariationalKernel vk;
  const double rho = inverse_softplus(sigma);
  vk.mu_w = Tensor::full({1, 1, n}, mu, true);
  vk.rho_w = Tensor::full({1, 1, n}, rho, true);
  vk.mu_b = Tensor::full({n}, mu, true);
  vk.rho_b = Tensor::full({n}, rho, true);
  return vk;
}

}  // namespace

TEST(SampleWeights, VanishingScaleReturnsMean) {
  Rng rng(1);
  auto vk = make_kernel(3, 2, 4, rng);
  vk.rho_w = Tensor::full(vk.rho_w.shape(), -40.0);
  vk.rho_b = Tensor::full(vk.rho_b.shape(), -40.0);
  const auto s = sample_weights(vk, LayerConfig{}, rng);
  for (std::size_t i = 0; i < s.weight.size(); ++i) EXPECT_NEAR(s.weight.at(i), vk.mu_w.at(i), 1e-15);
  for (std::size_t i = 0; i < s.bias.size(); ++i) EXPECT_NEAR(s.bias.at(i), vk.mu_b.at(i), 1e-15);
}

TEST(SampleWeights, DeterministicUnderSeed) {
  Rng init(2);
  const auto vk = make_kernel(5, 3, 2, init);
  Rng a(9), b(9);
  const auto x = sample_weights(vk, LayerConfig{}, a);
  const auto y = sample_weights(vk, LayerConfig{}, b);
  EXPECT_EQ(x.weight.to_vector(), y.weight.to_vector());
  EXPECT_EQ(x.bias.to_vector(), y.bias.to_vector());
}

TEST(SampleWeights, UnitScaleGivesUnitNormKernel) {
  VariationalKernel vk;
  vk.mu_w = Tensor::zeros({7, 4, 3}, true);
  vk.rho_w = Tensor::full({7, 4, 3}, inverse_softplus(1.0), true);
  vk.mu_b = Tensor::zeros({3}, true);
  vk.rho_b = Tensor::zeros({3}, true);
  LayerConfig cfg;
  cfg.qire.p = 0.0;
  Rng rng(3);
  const auto s = sample_weights(vk, cfg, rng);
  double n2 = 0;
  for (double v : s.weight.data()) n2 += v * v;
  EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-10);
}

TEST(SampleWeights, KernelNoiseIsTheSamplerOutput) {
  Rng init(4);
  const auto vk = make_kernel(3, 2, 2, init);
  Rng a(21), b(21);
  const auto s = sample_weights(vk, LayerConfig{}, a);
  const auto noise = qire_sample(vk.kernel_shape(), LayerConfig{}.qire, b);
  for (std::size_t i = 0; i < s.weight.size(); ++i)
    EXPECT_NEAR(s.weight.at(i), vk.mu_w.at(i) + softplus_ref(vk.rho_w.at(i)) * noise.values[i], 1e-14);
}

TEST(InverseSoftplus, RoundTrips) {
  for (double s : {1e-6, 0.05, 0.5, 1.0, 3.0, 40.0}) EXPECT_NEAR(softplus_ref(inverse_softplus(s)), s, 1e-12 * std::max(1.0, s));
}

TEST(ForwardInfer, ScaleByTwoKernel) {
  VariationalKernel vk;
  vk.mu_w = Tensor::from({1, 1, 1}, {2.0}, true);
  vk.rho_w = Tensor::zeros({1, 1, 1}, true);
  vk.mu_b = Tensor::zeros({1}, true);
  vk.rho_b = Tensor::zeros({1}, true);
  LayerConfig cfg;
  cfg.activation = Activation::identity;
  Rng rng(5);
  const auto x = oracle::random_tensor({2, 9, 1}, rng, false);
  const auto y = forward_infer(x, vk, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.at(i), 2.0 * x.at(i));
  EXPECT_EQ(forward_infer(x, vk, cfg).to_vector(), y.to_vector());
}

TEST(ForwardTrain, IdentityKernelWithVanishingScale) {
  VariationalKernel vk;
  vk.mu_w = Tensor::from({1, 1, 1}, {1.0}, true);
  vk.rho_w = Tensor::full({1, 1, 1}, -40.0, true);
  vk.mu_b = Tensor::zeros({1}, true);
  vk.rho_b = Tensor::full({1}, -40.0, true);
  LayerConfig cfg;
  cfg.activation = Activation::identity;
  cfg.qire.k = 1;
  Rng rng(6);
  const auto x = oracle::random_tensor({1, 12, 1}, rng, false);
  const auto y = forward_train(x, vk, cfg, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.at(i), x.at(i), 1e-12);
}

TEST(ForwardTrain, ApproachesInferenceAsScaleVanishes) {
  Rng rng(7);
  auto vk = make_kernel(5, 3, 4, rng);
  vk.rho_w = Tensor::full(vk.rho_w.shape(), -20.0);
  vk.rho_b = Tensor::full(vk.rho_b.shape(), -20.0);
  const auto x = oracle::random_tensor({2, 16, 3}, rng, false);
  for (auto act : {Activation::relu, Activation::tanh, Activation::identity}) {
    LayerConfig cfg;
    cfg.activation = act;
    const auto a = forward_train(x, vk, cfg, rng);
    const auto b = forward_infer(x, vk, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-6);
  }
}

TEST(ForwardTrain, NoiseChangesBetweenCalls) {
  Rng rng(8);
  const auto vk = make_kernel(3, 2, 2, rng);
  const auto x = oracle::random_tensor({1, 10, 2}, rng, false);
  const auto a = forward_train(x, vk, LayerConfig{}, rng);
  const auto b = forward_train(x, vk, LayerConfig{}, rng);
  EXPECT_NE(a.to_vector(), b.to_vector());
}

TEST(ForwardTrain, ShapeMismatchThrows) {
  Rng rng(9);
  const auto vk = make_kernel(3, 2, 2, rng);
  EXPECT_THROW(forward_infer(Tensor::zeros({1, 10, 3}), vk, LayerConfig{}), ShapeError);
  EXPECT_THROW(forward_train(Tensor::zeros({1, 10, 3}), vk, LayerConfig{}, rng), ShapeError);
}

TEST(KlDivergence, Examples) {
  {
    const auto kl = kl_divergence(constant_kernel(0.0, 0.1, 1));
    EXPECT_NEAR(kl.item() / 2, 0.0, 2e-7);
  }
  {
    const auto kl = kl_divergence(constant_kernel(0.1, 0.1, 1));
    EXPECT_NEAR(kl.item() / 2, 0.5, 2e-7);
    EXPECT_NEAR(kl.item() / 2, kl_element(0.1, 0.1, 0.01), 1e-12);
  }
  double prev = -1;
  for (double mu : {0.0, 0.05, 0.1, 0.5, 1.0, 3.0}) {
    const double kl = kl_divergence(constant_kernel(mu, 0.2)).item();
    EXPECT_GT(kl, prev);
    prev = kl;
    EXPECT_DOUBLE_EQ(kl, kl_divergence(constant_kernel(-mu, 0.2)).item());
  }
}

TEST(KlDivergence, MatchesElementwiseSumAndIsNonnegative) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto vk = make_kernel(3, 2, 3, rng);
    vk.prior_var = 0.001 + rng.uniform();
    double want = 0;
    auto add = [&](const Tensor& mu, const Tensor& rho) {
      for (std::size_t i = 0; i < mu.size(); ++i) want += kl_element(mu.at(i), softplus_ref(rho.at(i)), vk.prior_var);
    };
    add(vk.mu_w, vk.rho_w);
    add(vk.mu_b, vk.rho_b);
    const double kl = kl_divergence(vk).item();
    EXPECT_NEAR(kl, want, 1e-10 * std::max(1.0, std::abs(want)));
    EXPECT_GE(kl, -2e-7 * 24);
  }
  auto bad = constant_kernel(0, 0.1);
  bad.prior_var = 0;
  EXPECT_THROW(kl_divergence(bad), ConfigError);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(Tensor::scalar(1.25), Tensor::scalar(7.0), 0.0).item(), 1.25);
  EXPECT_NEAR(total_loss(Tensor::scalar(1.0), Tensor::scalar(2e5), 1e-5).item(), 3.0, 1e-12);
}

TEST(TotalLoss, GradientIncludesKlPath) {
  Rng rng(11);
  auto vk = make_kernel(3, 2, 2, rng);
  const auto x = oracle::random_tensor({2, 8, 2}, rng, false);
  LayerConfig cfg;
  cfg.activation = Activation::tanh;
  const std::uint64_t seed = 77;
  auto loss = [&] {
    Rng frozen(seed);
    const auto task = oracle::probe(forward_train(x, vk, cfg, frozen));
    return total_loss(task, kl_divergence(vk), 0.3);
  };
  backward(loss());
  for (const auto& leaf : {vk.mu_w, vk.rho_w, vk.mu_b, vk.rho_b}) {
    const auto fd = oracle::fd_gradient(leaf, [&] { return loss().item(); });
    EXPECT_LT(oracle::rel_error(leaf.grad(), fd), 1e-4);
  }
  // KL alone contributes a nonzero ρ gradient.
  backward(kl_divergence(vk));
  double g = 0;
  for (double v : vk.rho_w.grad()) g += std::abs(v);
  EXPECT_GT(g, 0.0);
}

TEST(ForwardTrain, GradientsMatchFiniteDifferencesAcrossConfigurations) {
  Rng rng(12);
  const Activation acts[] = {Activation::identity, Activation::tanh, Activation::softplus, Activation::sigmoid};
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(4), cin = 1 + rng.below(3), cout = 1 + rng.below(3);
    auto vk = make_kernel(k, cin, cout, rng);
    LayerConfig cfg;
    cfg.activation = acts[rng.below(4)];
    cfg.stride = 1 + rng.below(2);
    cfg.qire.k = 1 + rng.below(std::min<std::size_t>(5, k * cin * cout));
    cfg.qire.p = rng.uniform() < 0.5 ? 0.0 : 0.2;
    const auto x = oracle::random_tensor({2, 6, cin}, rng, false);
    const std::uint64_t seed = rng.next_u64();
    auto loss = [&] {
      Rng frozen(seed);
      return total_loss(oracle::probe(forward_train(x, vk, cfg, frozen)), kl_divergence(vk), 1e-2);
    };
    backward(loss());
    for (const auto& leaf : {vk.mu_w, vk.rho_w, vk.mu_b, vk.rho_b}) {
      const auto fd = oracle::fd_gradient(leaf, [&] { return loss().item(); });
      worst = std::max(worst, oracle::rel_error(leaf.grad(), fd));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ForwardTrain, MeanGradientIsTheUpstreamGradient) {
  // With frozen noise W = μ + σ ⊙ ε, so ∂W/∂μ = 1 and ∂W/∂ρ = softplus'(ρ) ε.
  Rng rng(13);
  auto vk = make_kernel(2, 2, 2, rng);
  Rng a(5), b(5);
  const auto s = sample_weights(vk, LayerConfig{}, a);
  backward(oracle::probe(s.weight, 3));
  const auto noise = qire_sample(vk.kernel_shape(), LayerConfig{}.qire, b);
  Rng r(3);
  for (std::size_t i = 0; i < vk.mu_w.size(); ++i) {
    const double upstream = r.normal();
    const double rho = vk.rho_w.at(i);
    EXPECT_NEAR(vk.mu_w.grad()[i], upstream, 1e-14);
    EXPECT_NEAR(vk.rho_w.grad()[i], upstream * noise.values[i] / (1 + std::exp(-rho)), 1e-14);
  }
}

TEST(VariationalKernel, ParameterParityAndInit) {
  Rng rng(14);
  const auto vk = VariationalKernel::init(7, 16, 32, 0.01, rng);
  EXPECT_EQ(vk.parameter_count(), 2u * (7 * 16 * 32 + 32));
  const double bound = std::sqrt(6.0 / (7 * 16 + 32));
  for (double v : vk.mu_w.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : vk.mu_b.data()) EXPECT_EQ(v, 0.0);
  for (double v : vk.rho_w.data()) EXPECT_NEAR(softplus_ref(v), 0.05, 1e-12);
  for (double v : vk.rho_b.data()) EXPECT_NEAR(softplus_ref(v), 0.05, 1e-12);
  EXPECT_TRUE(vk.mu_w.requires_grad());
  EXPECT_TRUE(vk.rho_b.requires_grad());
}

TEST(LayerConfig, Validation) {
  LayerConfig cfg;
  cfg.kl_scale = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.kl_scale = 0;
  cfg.stride = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
