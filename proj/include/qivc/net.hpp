#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qivc/ops.hpp"
#include "qivc/qivconv.hpp"
#include "qivc/rng.hpp"
#include "qivc/tensor.hpp"

namespace qivc {

enum class Mode { train, infer };

/// Forward-pass switches. Training draws weight noise and normalizes with
/// batch statistics; inference uses posterior means and running statistics.
/// The two switches can be set independently (e.g. sampled weights with
/// frozen norms).
struct ForwardContext {
  bool sample_weights = false;
  bool batch_statistics = false;
  Rng* rng = nullptr;

  static ForwardContext train(Rng& rng) { return {true, true, &rng}; }
  static ForwardContext infer() { return {}; }
  static ForwardContext for_mode(Mode mode, Rng* rng);
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct BatchNormConfig {
  double momentum = 0.1;
  double eps = 1e-5;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::size_t channels, BatchNormConfig cfg);
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  Tensor gamma, beta;
  BatchNormStats stats;
};

/// Deterministic 1×1 convolution (shortcut path).
class PointwiseConv {
 public:
  PointwiseConv() = default;
  PointwiseConv(std::size_t cin, std::size_t cout, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;

  Tensor weight, bias;  // [1,Cin,Cout], [Cout]
};

class Lstm {
 public:
  Lstm() = default;
  Lstm(std::size_t input, std::size_t hidden, Rng& rng);
  /// Zero initial state.
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;
  std::size_t hidden_size() const { return w_hidden.dim(0); }

  Tensor w_input, w_hidden, bias;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;

  Tensor weight, bias;
};

class QiVConvLayer {
 public:
  QiVConvLayer() = default;
  QiVConvLayer(std::size_t k, std::size_t cin, std::size_t cout, const LayerConfig& cfg, double prior_var, Rng& rng);
  /// Draws from a fork of ctx.rng when sampling.
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  Tensor kl() const { return kl_divergence(kernel); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;

  VariationalKernel kernel;
  LayerConfig cfg;
};

struct BlockSpec {
  std::size_t filters = 16;
  std::size_t kernel_size = 7;
};

/// Intermediate features of one block pass.
struct BlockTrace {
  Tensor shortcut;
  Tensor forward_path;   // act(norm(conv(x)))
  Tensor backward_path;  // reverse(act(norm(conv(reverse(x)))))
  Tensor fused;
  Tensor output;
};

/// Reversal-fusion-residual block.
class RfrBlock {
 public:
  RfrBlock() = default;
  RfrBlock(std::size_t in_channels, BlockSpec spec, const LayerConfig& conv_cfg, double prior_var,
           Activation act, BatchNormConfig bn, Rng& rng);

  BlockTrace trace(const Tensor& x, const ForwardContext& ctx);
  Tensor forward(const Tensor& x, const ForwardContext& ctx) { return trace(x, ctx).output; }
  Tensor kl() const;
  std::size_t out_channels() const { return refine_lstm.hidden_size(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers) const;

  PointwiseConv shortcut_conv;
  BatchNorm shortcut_norm;
  QiVConvLayer fwd_conv, bwd_conv;
  BatchNorm fwd_norm, bwd_norm;
  Lstm fusion_lstm;
  BatchNorm fusion_norm;
  Lstm refine_lstm;
  BatchNorm refine_norm;
  Activation activation = Activation::relu;
};

struct NetworkConfig {
  std::size_t in_channels = 1;
  std::vector<BlockSpec> blocks{{16, 7}, {32, 7}};
  bool pool_between = true;
  std::size_t dense_width = 32;
  Activation activation = Activation::relu;
  QireConfig qire;
  double kl_scale = 1e-5;
  double prior_var = 0.01;
  BatchNormConfig bn;
  std::uint64_t seed = 1;  // parameter initialization

  void validate() const;
  LayerConfig conv_layer_config() const;
};

struct NetOutput {
  Tensor logits;      // [B,2]
  Tensor probs;       // [B,2], rows sum to one
  Tensor bottleneck;  // [B,F] after global max pooling
};

/// Stacked RFR blocks, width-2 max pooling between blocks, global max
/// pooling over time, a hidden dense layer, and a two-way softmax.
class QivcNet {
 public:
  explicit QivcNet(NetworkConfig cfg);

  NetOutput forward_full(const Tensor& x, const ForwardContext& ctx);
  Tensor forward(const Tensor& x, const ForwardContext& ctx) { return forward_full(x, ctx).probs; }

  /// Sum of the KL terms of every variational layer.
  Tensor kl() const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;
  /// Every batch-norm layer, in forward order.
  std::vector<BatchNorm*> norms();
  std::size_t parameter_count() const;

  const NetworkConfig& config() const { return cfg_; }
  std::vector<RfrBlock>& blocks() { return blocks_; }
  Dense& hidden() { return hidden_; }
  Dense& output() { return output_; }

 private:
  NetworkConfig cfg_;
  std::vector<RfrBlock> blocks_;
  Dense hidden_;
  Dense output_;
};

}  // namespace qivc
