#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qivc/ops.hpp"
#include "qivc/qire.hpp"
#include "qivc/rng.hpp"
#include "qivc/tensor.hpp"

namespace qivc {

inline constexpr double kLogStabilizer = 1e-8;

struct LayerConfig {
  QireConfig qire;
  double kl_scale = 1e-5;
  Activation activation = Activation::relu;
  std::size_t stride = 1;

  void validate() const;
};

/// Gaussian posterior over a conv kernel and its bias; sigma = softplus(rho).
struct VariationalKernel {
  Tensor mu_w;   // [K, Cin, Cout]
  Tensor rho_w;  // [K, Cin, Cout]
  Tensor mu_b;   // [Cout]
  Tensor rho_b;  // [Cout]
  double prior_var = 0.01;

  /// mu_w ~ U(±sqrt(6/(K·Cin + Cout))), mu_b = 0, rho such that
  /// sigma = sigma_prior / 2.
  static VariationalKernel init(std::size_t k, std::size_t cin, std::size_t cout, double prior_var, Rng& rng);

  std::size_t parameter_count() const;
  Shape kernel_shape() const { return mu_w.shape(); }
  void validate() const;
};

/// Inverse of softplus, for setting rho from a target sigma.
double inverse_softplus(double sigma);

struct SampledWeights {
  Tensor weight;
  Tensor bias;
};

/// One reparameterized draw: W = mu + softplus(rho) ⊙ qire_noise and
/// b = mu_b + softplus(rho_b) ⊙ eta with eta ~ N(0, I). The noise is a
/// constant of the graph, so gradients reach mu and rho only.
SampledWeights sample_weights(const VariationalKernel& vk, const LayerConfig& cfg, Rng& rng);

/// phi(conv(x; W_s) + b_s) with freshly sampled weights.
Tensor forward_train(const Tensor& x, const VariationalKernel& vk, const LayerConfig& cfg, Rng& rng);
/// phi(conv(x; mu_w) + mu_b); consumes no randomness.
Tensor forward_infer(const Tensor& x, const VariationalKernel& vk, const LayerConfig& cfg);

/// Sum over every weight and bias of
/// (sigma² + mu²)/(2 sigma_prior²) - log(sigma + 1e-8) + log sigma_prior - 1/2.
Tensor kl_divergence(const VariationalKernel& vk);

/// task + lambda · kl.
Tensor total_loss(const Tensor& task_loss, const Tensor& kl_sum, double lambda);

}  // namespace qivc
