#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "qivc/error.hpp"
#include "qivc/loss.hpp"
#include "qivc/net.hpp"

using namespace qivc;

namespace {

void copy_values(const Tensor& dst, const Tensor& src) {
  auto d = Tensor(dst.shared_node()).mutable_data();
  std::copy(src.data().begin(), src.data().end(), d.begin());
}

void fill(const Tensor& t, double v) {
  auto d = Tensor(t.shared_node()).mutable_data();
  std::fill(d.begin(), d.end(), v);
}

void mirror_paths(RfrBlock& block) {
  copy_values(block.bwd_conv.kernel.mu_w, block.fwd_conv.kernel.mu_w);
  copy_values(block.bwd_conv.kernel.rho_w, block.fwd_conv.kernel.rho_w);
  copy_values(block.bwd_conv.kernel.mu_b, block.fwd_conv.kernel.mu_b);
  copy_values(block.bwd_conv.kernel.rho_b, block.fwd_conv.kernel.rho_b);
}

RfrBlock tiny_block(Activation act, std::size_t channels = 2, std::size_t filters = 3, std::size_t k = 3,
                    std::uint64_t seed = 1) {
  Rng rng(seed);
  LayerConfig cfg;
  cfg.qire.k = 2;
  return RfrBlock(channels, BlockSpec{filters, k}, cfg, 0.01, act, BatchNormConfig{}, rng);
}

NetworkConfig micro_config() {
  NetworkConfig cfg;
  cfg.blocks = {{2, 3}, {3, 3}};
  cfg.dense_width = 4;
  cfg.activation = Activation::tanh;
  cfg.qire.k = 2;
  cfg.seed = 5;
  return cfg;
}

std::vector<Tensor> leaves(const std::vector<NamedTensor>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace

// ------------------------------------------------------------------ block

TEST(RfrBlock, InferenceIsBitIdentical) {
  auto block = tiny_block(Activation::relu);
  Rng rng(2);
  const auto x = oracle::random_tensor({2, 10, 2}, rng, false);
  const auto a = block.forward(x, ForwardContext::infer());
  const auto b = block.forward(x, ForwardContext::infer());
  EXPECT_EQ(a.to_vector(), b.to_vector());
  EXPECT_EQ(a.shape(), (Shape{2, 10, 3}));
  EXPECT_EQ(block.out_channels(), 3u);
}

TEST(RfrBlock, ConstantInputGivesMatchingPathsAwayFromEdges) {
  auto block = tiny_block(Activation::relu, 2, 3, 5);
  mirror_paths(block);
  const std::size_t T = 12, half = 2;
  const auto x = Tensor::full({1, T, 2}, 0.7);
  const auto t = block.trace(x, ForwardContext::infer());
  for (std::size_t s = half; s + half < T; ++s)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(t.forward_path.at(s * 3 + c), t.backward_path.at(s * 3 + c));
}

TEST(RfrBlock, ConstantInputWithPalindromicKernelGivesIdenticalPaths) {
  auto block = tiny_block(Activation::relu, 2, 3, 5);
  auto& mu = block.fwd_conv.kernel.mu_w;
  auto d = Tensor(mu.shared_node()).mutable_data();
  const std::size_t K = 5, inner = 2 * 3;
  for (std::size_t k = 0; k < K / 2; ++k)
    for (std::size_t i = 0; i < inner; ++i) d[(K - 1 - k) * inner + i] = d[k * inner + i];
  mirror_paths(block);
  const auto t = block.trace(Tensor::full({1, 9, 2}, -0.3), ForwardContext::infer());
  // Mirrored edges sum the same terms in opposite order.
  for (std::size_t i = 0; i < t.forward_path.size(); ++i) EXPECT_NEAR(t.forward_path.at(i), t.backward_path.at(i), 1e-15);
}

TEST(RfrBlock, ReversalSwapsThePathFeatures) {
  auto block = tiny_block(Activation::tanh, 2, 3, 4);
  mirror_paths(block);
  Rng rng(3);
  const auto x = oracle::random_tensor({2, 11, 2}, rng, false);
  const auto a = block.trace(x, ForwardContext::infer());
  const auto b = block.trace(reverse_time(x), ForwardContext::infer());
  EXPECT_EQ(b.forward_path.to_vector(), reverse_time(a.backward_path).to_vector());
  EXPECT_EQ(b.backward_path.to_vector(), reverse_time(a.forward_path).to_vector());
}

TEST(RfrBlock, TraceFollowsTheBlockEquations) {
  auto block = tiny_block(Activation::relu);
  Rng rng(4);
  const auto x = oracle::random_tensor({2, 7, 2}, rng, false);
  const auto ctx = ForwardContext::infer();
  const auto t = block.trace(x, ctx);
  const auto act = Activation::relu;
  const auto shortcut = activate(block.shortcut_norm.forward(block.shortcut_conv.forward(x), ctx), act);
  const auto f = activate(block.fwd_norm.forward(forward_infer(x, block.fwd_conv.kernel, LayerConfig{{}, 0, Activation::identity, 1}), ctx), act);
  const auto b = reverse_time(activate(
      block.bwd_norm.forward(forward_infer(reverse_time(x), block.bwd_conv.kernel, LayerConfig{{}, 0, Activation::identity, 1}), ctx),
      act));
  const auto fused = activate(block.fusion_norm.forward(block.fusion_lstm.forward(concat({f, b}, 2)), ctx), act);
  const auto out = activate(block.refine_norm.forward(block.refine_lstm.forward(concat({fused, shortcut}, 2)), ctx), act);
  EXPECT_EQ(t.shortcut.to_vector(), shortcut.to_vector());
  EXPECT_EQ(t.forward_path.to_vector(), f.to_vector());
  EXPECT_EQ(t.backward_path.to_vector(), b.to_vector());
  EXPECT_EQ(t.output.to_vector(), out.to_vector());
}

TEST(RfrBlock, GradientsMatchFiniteDifferences) {
  auto block = tiny_block(Activation::tanh, 2, 3, 3);
  Rng rng(5);
  auto x = oracle::random_tensor({2, 8, 2}, rng);
  std::vector<NamedTensor> params, buffers;
  block.collect("b", params, buffers);
  auto all = leaves(params);
  all.push_back(x);
  const auto f = [&] {
    Rng frozen(11);
    return block.forward(x, ForwardContext::train(frozen));
  };
  backward(oracle::probe(f()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto fd = oracle::fd_gradient(all[i], [&] { return oracle::probe(f()).item(); });
    EXPECT_LT(oracle::rel_error(all[i].grad(), fd), 1e-4) << (i < params.size() ? params[i].name : "input");
  }
}

TEST(RfrBlock, LstmGradientsThroughTheLayerWrapper) {
  Rng rng(6);
  Lstm cell(2, 3, rng);
  auto x = oracle::random_tensor({2, 3, 2}, rng);
  EXPECT_LT(oracle::grad_check([&] { return cell.forward(x); }, {x, cell.w_input, cell.w_hidden, cell.bias}), 1e-4);
}

// ---------------------------------------------------------------- network

TEST(QivcNet, RowsAreProbabilities) {
  QivcNet net(micro_config());
  Rng rng(7);
  const auto x = oracle::random_tensor({5, 16, 1}, rng, false);
  for (const auto& ctx : {ForwardContext::infer(), ForwardContext::train(rng)}) {
    const auto p = net.forward(x, ctx);
    ASSERT_EQ(p.shape(), (Shape{5, 2}));
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(p.at(2 * r) + p.at(2 * r + 1), 1.0, 1e-12);
  }
}

TEST(QivcNet, BatchPermutationPermutesOutputs) {
  QivcNet net(micro_config());
  Rng rng(8);
  const std::size_t B = 6, T = 16;
  const auto x = oracle::random_tensor({B, T, 1}, rng, false);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<double> xp(B * T);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t t = 0; t < T; ++t) xp[i * T + t] = x.at(perm[i] * T + t);
  const auto a = net.forward(x, ForwardContext::infer());
  const auto b = net.forward(Tensor::from({B, T, 1}, xp), ForwardContext::infer());
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(b.at(i * 2 + c), a.at(perm[i] * 2 + c), 1e-12);
}

TEST(QivcNet, SampledWeightsConvergeToPosteriorMean) {
  auto cfg = micro_config();
  cfg.qire.p = 0.0;
  QivcNet net(cfg);
  for (auto& block : net.blocks())
    for (auto* layer : {&block.fwd_conv, &block.bwd_conv}) {
      fill(layer->kernel.rho_w, -40.0);
      fill(layer->kernel.rho_b, -40.0);
    }
  Rng rng(9);
  const auto x = oracle::random_tensor({3, 16, 1}, rng, false);
  ForwardContext sampled{true, false, &rng};
  const auto a = net.forward_full(x, sampled).logits;
  const auto b = net.forward_full(x, ForwardContext::infer()).logits;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-5);
}

TEST(QivcNet, BottleneckIsThePooledFeatureVector) {
  QivcNet net(micro_config());
  Rng rng(10);
  const auto x = oracle::random_tensor({2, 16, 1}, rng, false);
  const auto ctx = ForwardContext::infer();
  const auto out = net.forward_full(x, ctx);
  Tensor h = x;
  for (std::size_t i = 0; i < net.blocks().size(); ++i) {
    if (i > 0) h = max_pool2(h);
    h = net.blocks()[i].forward(h, ctx);
  }
  const auto pooled = global_max_pool(h);
  EXPECT_EQ(out.bottleneck.to_vector(), pooled.to_vector());
  const auto logits = net.output().forward(activate(net.hidden().forward(pooled), Activation::tanh));
  EXPECT_EQ(out.logits.to_vector(), logits.to_vector());
}

TEST(QivcNet, ParameterCountAndKlCoverage) {
  QivcNet net(micro_config());
  std::size_t total = 0;
  for (const auto& p : net.parameters()) total += p.tensor.size();
  EXPECT_EQ(net.parameter_count(), total);
  // Each variational layer holds μ and ρ for every weight and bias.
  for (auto& block : net.blocks()) {
    const auto& k = block.fwd_conv.kernel;
    EXPECT_EQ(k.parameter_count(), 2 * (k.mu_w.size() + k.mu_b.size()));
  }
  double kl = 0;
  for (auto& block : net.blocks()) kl += kl_divergence(block.fwd_conv.kernel).item() + kl_divergence(block.bwd_conv.kernel).item();
  EXPECT_NEAR(net.kl().item(), kl, 1e-9 * std::abs(kl));
}

TEST(QivcNet, MicroNetGradientsMatchFiniteDifferences) {
  QivcNet net(micro_config());
  Rng rng(11);
  const auto x = oracle::random_tensor({2, 8, 1}, rng, false);
  const auto target = one_hot(std::vector<int>{0, 1});
  const auto f = [&] {
    Rng frozen(3);
    const auto p = net.forward(x, ForwardContext::train(frozen));
    return add(composite_loss(p, target, LossWeights{}).loss, scale(net.kl(), 1e-3));
  };
  backward(f());
  double worst = 0;
  for (const auto& p : net.parameters()) {
    const auto fd = oracle::fd_gradient(p.tensor, [&] { return f().item(); });
    const double err = oracle::rel_error(p.tensor.grad(), fd);
    EXPECT_LT(err, 1e-4) << p.name;
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(QivcNet, ConfigValidation) {
  auto cfg = micro_config();
  cfg.blocks.clear();
  EXPECT_THROW(QivcNet{cfg}, ConfigError);
  cfg = micro_config();
  cfg.blocks = {{8, 3}, {4, 3}};
  EXPECT_THROW(QivcNet{cfg}, ConfigError);
  cfg = micro_config();
  cfg.kl_scale = -1;
  EXPECT_THROW(QivcNet{cfg}, ConfigError);
}

TEST(QivcNet, SameSeedSameInitialization) {
  QivcNet a(micro_config()), b(micro_config());
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor.to_vector(), pb[i].tensor.to_vector());
  }
}

// ----------------------------------------------------------------- losses

TEST(Loss, PerfectPrediction) {
  const auto y = one_hot(std::vector<int>{0, 1, 1});
  EXPECT_LE(categorical_cross_entropy(y, y).item(), 1e-7);
  EXPECT_EQ(dice_loss(y, y).item(), 0.0);
}

TEST(Loss, UniformPredictionCostsLn2) {
  const auto y = one_hot(std::vector<int>{0, 1, 0, 1});
  const auto p = Tensor::full({4, 2}, 0.5);
  EXPECT_NEAR(categorical_cross_entropy(p, y).item(), std::numbers::ln2, 1e-7);
}

TEST(Loss, DiceWorkedExample) {
  const auto p = Tensor::from({2, 2}, {0.8, 0.2, 0.4, 0.6});
  const auto y = one_hot(std::vector<int>{0, 1});
  EXPECT_NEAR(dice_loss(p, y).item(), 1 - 2 * (0.8 + 0.6) / (2 + 2), 1e-15);
  EXPECT_NEAR(dice_loss(p, y).item(), 0.3, 1e-15);
  // Positive column only: 1 - 2·0.6/(1 + 0.8)
  EXPECT_NEAR(dice_loss(p, y, DiceMode::positive_column).item(), 1 - 1.2 / 1.8, 1e-15);
}

TEST(Loss, CrossEntropyMatchesDirectSum) {
  const auto p = Tensor::from({3, 2}, {0.9, 0.1, 0.3, 0.7, 0.55, 0.45});
  const auto y = one_hot(std::vector<int>{0, 0, 1});
  const double want = -(std::log(0.9 + 1e-8) + std::log(0.3 + 1e-8) + std::log(0.45 + 1e-8)) / 3;
  EXPECT_NEAR(categorical_cross_entropy(p, y).item(), want, 1e-14);
}

TEST(Loss, CompositeGradientMatchesFiniteDifferences) {
  Rng rng(12);
  auto logits = oracle::random_tensor({4, 2}, rng);
  const auto y = one_hot(std::vector<int>{0, 1, 1, 0});
  LossWeights w;
  w.w_cce = 0.7;
  w.w_dice = 1.3;
  const auto f = [&] { return composite_loss(softmax(logits), y, w).loss; };
  backward(f());
  const auto fd = oracle::fd_gradient(logits, [&] { return f().item(); });
  EXPECT_LT(oracle::rel_error(logits.grad(), fd), 1e-4);
}

TEST(Loss, CompositeCombinesWithIncomingWeights) {
  const auto p = Tensor::from({2, 2}, {0.8, 0.2, 0.4, 0.6});
  const auto y = one_hot(std::vector<int>{0, 1});
  LossWeights w;
  w.w_cce = 0.5;
  w.w_dice = 1.5;
  const auto c = composite_loss(p, y, w);
  EXPECT_NEAR(c.loss.item(), 0.5 * c.cce + 1.5 * c.dice, 1e-15);
  EXPECT_NEAR(c.dice, 0.3, 1e-15);
}

TEST(Loss, RejectsNonProbabilities) {
  const auto y = one_hot(std::vector<int>{0, 1});
  EXPECT_THROW(composite_loss(Tensor::from({2, 2}, {0.8, 0.8, 0.5, 0.5}), y, LossWeights{}), NumericalError);
  EXPECT_THROW(composite_loss(Tensor::from({2, 2}, {1.2, -0.2, 0.5, 0.5}), y, LossWeights{}), NumericalError);
  EXPECT_THROW(composite_loss(Tensor::from({2, 2}, {NAN, 0.5, 0.5, 0.5}), y, LossWeights{}), NumericalError);
}

TEST(LossWeights, SumToTwoAfterEveryUpdate) {
  Rng rng(13);
  LossWeights w;
  for (int i = 0; i < 1000; ++i) {
    w = w.updated(5 * rng.uniform(), rng.uniform());
    EXPECT_NEAR(w.w_cce + w.w_dice, 2.0, 1e-12);
    EXPECT_GE(w.w_cce, 0.0);
    EXPECT_GE(w.w_dice, 0.0);
  }
  w = LossWeights{}.updated(0.0, 0.0);
  EXPECT_NEAR(w.w_cce + w.w_dice, 2.0, 1e-12);
}

TEST(LossWeights, FollowTheMovingAverages) {
  LossWeights w;
  w.decay = 0.9;
  w = w.updated(3.0, 1.0);
  EXPECT_NEAR(w.w_cce, 1.5, 1e-15);
  EXPECT_NEAR(w.w_dice, 0.5, 1e-15);
  w = w.updated(1.0, 1.0);
  const double ec = 0.9 * 3 + 0.1 * 1, ed = 1.0;
  EXPECT_NEAR(w.w_cce, 2 * ec / (ec + ed), 1e-14);
  EXPECT_NEAR(w.w_dice, 2 * ed / (ec + ed), 1e-14);

  LossWeights fixed;
  fixed.dynamic = false;
  fixed = fixed.updated(3.0, 1.0);
  EXPECT_EQ(fixed.w_cce, 1.0);
  EXPECT_EQ(fixed.w_dice, 1.0);
}
