#include "qivc/net.hpp"

#include <cmath>

#include "qivc/error.hpp"

namespace qivc {

ForwardContext ForwardContext::for_mode(Mode mode, Rng* rng) {
  if (mode == Mode::infer) return infer();
  if (rng == nullptr) throw ConfigError("training-mode forward needs a random source");
  return train(*rng);
}

namespace {

Tensor uniform_tensor(Shape shape, double limit, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::string join(const std::string& prefix, const char* name) { return prefix + "." + name; }

}  // namespace

BatchNorm::BatchNorm(std::size_t channels, BatchNormConfig cfg)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      stats(BatchNormStats::create(channels, cfg.momentum, cfg.eps)) {}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx) {
  return batch_norm(x, gamma, beta, stats, ctx.batch_statistics);
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                        std::vector<NamedTensor>& buffers) const {
  params.push_back({join(prefix, "gamma"), gamma});
  params.push_back({join(prefix, "beta"), beta});
  buffers.push_back({join(prefix, "running_mean"), stats.running_mean});
  buffers.push_back({join(prefix, "running_var"), stats.running_var});
}

PointwiseConv::PointwiseConv(std::size_t cin, std::size_t cout, Rng& rng)
    : weight(uniform_tensor({1, cin, cout}, std::sqrt(6.0 / static_cast<double>(cin + cout)), rng)),
      bias(Tensor::zeros({cout}, true)) {}

Tensor PointwiseConv::forward(const Tensor& x) const { return conv1d(x, weight, bias, 1); }

void PointwiseConv::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
  params.push_back({join(prefix, "weight"), weight});
  params.push_back({join(prefix, "bias"), bias});
}

Lstm::Lstm(std::size_t input, std::size_t hidden, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_input = uniform_tensor({input, 4 * hidden}, limit, rng);
  w_hidden = uniform_tensor({hidden, 4 * hidden}, limit, rng);
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
  bias = Tensor::from({4 * hidden}, std::move(b), true);
}

Tensor Lstm::forward(const Tensor& x) const {
  const std::size_t batch = x.dim(0), h = hidden_size();
  const Tensor zero = Tensor::zeros({batch, h});
  return lstm(x, w_input, w_hidden, bias, zero, zero);
}

void Lstm::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
  params.push_back({join(prefix, "w_input"), w_input});
  params.push_back({join(prefix, "w_hidden"), w_hidden});
  params.push_back({join(prefix, "bias"), bias});
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng)
    : weight(uniform_tensor({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng)),
      bias(Tensor::zeros({out}, true)) {}

void Dense::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
  params.push_back({join(prefix, "weight"), weight});
  params.push_back({join(prefix, "bias"), bias});
}

QiVConvLayer::QiVConvLayer(std::size_t k, std::size_t cin, std::size_t cout, const LayerConfig& layer_cfg,
                           double prior_var, Rng& rng)
    : kernel(VariationalKernel::init(k, cin, cout, prior_var, rng)), cfg(layer_cfg) {
  cfg.validate();
  cfg.qire.validate(kernel.mu_w.size());
}

Tensor QiVConvLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.sample_weights) return forward_infer(x, kernel, cfg);
  if (ctx.rng == nullptr) throw ConfigError("qivconv: sampling forward without a random source");
  Rng layer_rng = ctx.rng->fork();
  return forward_train(x, kernel, cfg, layer_rng);
}

void QiVConvLayer::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
  params.push_back({join(prefix, "mu_w"), kernel.mu_w});
  params.push_back({join(prefix, "rho_w"), kernel.rho_w});
  params.push_back({join(prefix, "mu_b"), kernel.mu_b});
  params.push_back({join(prefix, "rho_b"), kernel.rho_b});
}

RfrBlock::RfrBlock(std::size_t in_channels, BlockSpec spec, const LayerConfig& conv_cfg, double prior_var,
                   Activation act, BatchNormConfig bn, Rng& rng)
    : activation(act) {
  if (spec.filters == 0 || spec.kernel_size == 0) throw ConfigError("rfr block: filters and kernel size must be positive");
  LayerConfig path_cfg = conv_cfg;
  path_cfg.activation = Activation::identity;  // norm and activation follow the conv
  const std::size_t f = spec.filters;
  shortcut_conv = PointwiseConv(in_channels, f, rng);
  shortcut_norm = BatchNorm(f, bn);
  fwd_conv = QiVConvLayer(spec.kernel_size, in_channels, f, path_cfg, prior_var, rng);
  bwd_conv = QiVConvLayer(spec.kernel_size, in_channels, f, path_cfg, prior_var, rng);
  fwd_norm = BatchNorm(f, bn);
  bwd_norm = BatchNorm(f, bn);
  fusion_lstm = Lstm(2 * f, f, rng);
  fusion_norm = BatchNorm(f, bn);
  refine_lstm = Lstm(2 * f, f, rng);
  refine_norm = BatchNorm(f, bn);
}

BlockTrace RfrBlock::trace(const Tensor& x, const ForwardContext& ctx) {
  BlockTrace t;
  t.shortcut = activate(shortcut_norm.forward(shortcut_conv.forward(x), ctx), activation);
  t.forward_path = activate(fwd_norm.forward(fwd_conv.forward(x, ctx), ctx), activation);
  t.backward_path =
      reverse_time(activate(bwd_norm.forward(bwd_conv.forward(reverse_time(x), ctx), ctx), activation));
  t.fused = activate(fusion_norm.forward(fusion_lstm.forward(concat({t.forward_path, t.backward_path}, 2)), ctx),
                     activation);
  t.output = activate(refine_norm.forward(refine_lstm.forward(concat({t.fused, t.shortcut}, 2)), ctx), activation);
  return t;
}

Tensor RfrBlock::kl() const { return add(fwd_conv.kl(), bwd_conv.kl()); }

void RfrBlock::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                       std::vector<NamedTensor>& buffers) const {
  shortcut_conv.collect(prefix + ".shortcut_conv", params);
  shortcut_norm.collect(prefix + ".shortcut_norm", params, buffers);
  fwd_conv.collect(prefix + ".fwd_conv", params);
  fwd_norm.collect(prefix + ".fwd_norm", params, buffers);
  bwd_conv.collect(prefix + ".bwd_conv", params);
  bwd_norm.collect(prefix + ".bwd_norm", params, buffers);
  fusion_lstm.collect(prefix + ".fusion_lstm", params);
  fusion_norm.collect(prefix + ".fusion_norm", params, buffers);
  refine_lstm.collect(prefix + ".refine_lstm", params);
  refine_norm.collect(prefix + ".refine_norm", params, buffers);
}

void NetworkConfig::validate() const {
  if (in_channels == 0) throw ConfigError("network: input channels must be positive");
  if (blocks.empty()) throw ConfigError("network: at least one RFR block is required");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].filters == 0 || blocks[i].kernel_size == 0) {
      throw ConfigError("network: block " + std::to_string(i) + " needs positive filters and kernel size");
    }
    if (i > 0 && blocks[i].filters < blocks[i - 1].filters) {
      throw ConfigError("network: filter counts must be nondecreasing across blocks");
    }
  }
  if (dense_width == 0) throw ConfigError("network: dense width must be positive");
  if (!(prior_var > 0)) throw ConfigError("network: prior variance must be positive");
  if (!(kl_scale >= 0)) throw ConfigError("network: KL scale must be nonnegative");
  qire.validate();
}

LayerConfig NetworkConfig::conv_layer_config() const {
  LayerConfig c;
  c.qire = qire;
  c.kl_scale = kl_scale;
  c.activation = activation;
  return c;
}

QivcNet::QivcNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng = Rng::derive(cfg_.seed, 0x1417);
  std::size_t channels = cfg_.in_channels;
  for (const auto& spec : cfg_.blocks) {
    blocks_.emplace_back(channels, spec, cfg_.conv_layer_config(), cfg_.prior_var, cfg_.activation, cfg_.bn, rng);
    channels = spec.filters;
  }
  hidden_ = Dense(channels, cfg_.dense_width, rng);
  output_ = Dense(cfg_.dense_width, 2, rng);
}

NetOutput QivcNet::forward_full(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() != 3 || x.dim(2) != cfg_.in_channels) {
    throw ShapeError("network: input must be [B,T," + std::to_string(cfg_.in_channels) + "], got " +
                     to_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (i > 0 && cfg_.pool_between) h = max_pool2(h);
    h = blocks_[i].forward(h, ctx);
  }
  NetOutput out;
  out.bottleneck = global_max_pool(h);
  out.logits = output_.forward(activate(hidden_.forward(out.bottleneck), cfg_.activation));
  out.probs = softmax(out.logits);
  return out;
}

Tensor QivcNet::kl() const {
  Tensor total = blocks_.front().kl();
  for (std::size_t i = 1; i < blocks_.size(); ++i) total = add(total, blocks_[i].kl());
  return total;
}

std::vector<BatchNorm*> QivcNet::norms() {
  std::vector<BatchNorm*> out;
  for (auto& b : blocks_)
    for (auto* n : {&b.shortcut_norm, &b.fwd_norm, &b.bwd_norm, &b.fusion_norm, &b.refine_norm}) out.push_back(n);
  return out;
}

std::vector<NamedTensor> QivcNet::parameters() const {
  std::vector<NamedTensor> params, buffers;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i), params, buffers);
  hidden_.collect("hidden", params);
  output_.collect("output", params);
  return params;
}

std::vector<NamedTensor> QivcNet::buffers() const {
  std::vector<NamedTensor> params, buffers;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i), params, buffers);
  return buffers;
}

std::size_t QivcNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

}  // namespace qivc
