#include "qivc/qivconv.hpp"

#include <cmath>

#include "qivc/error.hpp"

namespace qivc {

void LayerConfig::validate() const {
  qire.validate();
  if (!(kl_scale >= 0)) throw ConfigError("layer: KL scale must be nonnegative");
  if (stride == 0) throw ConfigError("layer: stride must be positive");
}

double inverse_softplus(double sigma) {
  if (!(sigma > 0)) throw ConfigError("inverse_softplus: sigma must be positive");
  // log(exp(s) - 1) written to stay accurate for small and large s.
  return sigma > 30 ? sigma + std::log1p(-std::exp(-sigma)) : std::log(std::expm1(sigma));
}

VariationalKernel VariationalKernel::init(std::size_t k, std::size_t cin, std::size_t cout, double prior_var,
                                          Rng& rng) {
  if (k == 0 || cin == 0 || cout == 0) throw ConfigError("qivconv: kernel extents must be positive");
  if (!(prior_var > 0)) throw ConfigError("qivconv: prior variance must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(k * cin + cout));
  std::vector<double> mu(k * cin * cout);
  for (auto& m : mu) m = (2.0 * rng.uniform() - 1.0) * limit;
  const double rho = inverse_softplus(0.5 * std::sqrt(prior_var));
  VariationalKernel vk;
  vk.mu_w = Tensor::from({k, cin, cout}, std::move(mu), true);
  vk.rho_w = Tensor::full({k, cin, cout}, rho, true);
  vk.mu_b = Tensor::zeros({cout}, true);
  vk.rho_b = Tensor::full({cout}, rho, true);
  vk.prior_var = prior_var;
  return vk;
}

std::size_t VariationalKernel::parameter_count() const {
  return mu_w.size() + rho_w.size() + mu_b.size() + rho_b.size();
}

void VariationalKernel::validate() const {
  if (mu_w.shape() != rho_w.shape()) {
    throw ShapeError("qivconv: mu_w " + to_string(mu_w.shape()) + " and rho_w " + to_string(rho_w.shape()) + " differ");
  }
  if (mu_b.shape() != rho_b.shape()) throw ShapeError("qivconv: mu_b and rho_b shapes differ");
  if (mu_w.rank() != 3) throw ShapeError("qivconv: kernel must be [K,Cin,Cout], got " + to_string(mu_w.shape()));
  if (mu_b.rank() != 1 || mu_b.dim(0) != mu_w.dim(2)) throw ShapeError("qivconv: bias must be [Cout]");
  if (!(prior_var > 0)) throw ConfigError("qivconv: prior variance must be positive");
}

SampledWeights sample_weights(const VariationalKernel& vk, const LayerConfig& cfg, Rng& rng) {
  vk.validate();
  const NoiseTensor noise = qire_sample(vk.kernel_shape(), cfg.qire, rng);
  std::vector<double> eta(vk.mu_b.size());
  for (auto& e : eta) e = rng.normal();
  return {add(vk.mu_w, mul(softplus(vk.rho_w), noise.tensor())),
          add(vk.mu_b, mul(softplus(vk.rho_b), Tensor::from(vk.mu_b.shape(), std::move(eta))))};
}

Tensor forward_train(const Tensor& x, const VariationalKernel& vk, const LayerConfig& cfg, Rng& rng) {
  const SampledWeights w = sample_weights(vk, cfg, rng);
  return activate(conv1d(x, w.weight, w.bias, cfg.stride), cfg.activation);
}

Tensor forward_infer(const Tensor& x, const VariationalKernel& vk, const LayerConfig& cfg) {
  vk.validate();
  return activate(conv1d(x, vk.mu_w, vk.mu_b, cfg.stride), cfg.activation);
}

namespace {

Tensor kl_term(const Tensor& mu, const Tensor& rho, double prior_var) {
  const Tensor sigma = softplus(rho);
  const double inv = 1.0 / (2.0 * prior_var);
  const double constant = 0.5 * std::log(prior_var) - 0.5;  // log sigma_prior - 1/2
  const Tensor quad = scale(add(square(sigma), square(mu)), inv);
  return add_scalar(sum(sub(quad, log_eps(sigma, kLogStabilizer))), constant * static_cast<double>(mu.size()));
}

}  // namespace

Tensor kl_divergence(const VariationalKernel& vk) {
  vk.validate();
  return add(kl_term(vk.mu_w, vk.rho_w, vk.prior_var), kl_term(vk.mu_b, vk.rho_b, vk.prior_var));
}

Tensor total_loss(const Tensor& task_loss, const Tensor& kl_sum, double lambda) {
  if (!(lambda >= 0)) throw ConfigError("total_loss: lambda must be nonnegative");
  if (lambda == 0.0) return task_loss;
  return add(task_loss, scale(kl_sum, lambda));
}

}  // namespace qivc
