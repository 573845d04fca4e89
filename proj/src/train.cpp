#include "qivc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qivc/error.hpp"
#include "qivc/format.hpp"

namespace qivc {

void TrainHyper::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (!(adam_eps > 0)) throw ConfigError("Adam eps must be positive");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be nonnegative");
  if (!(ema_decay > 0 && ema_decay < 1)) throw ConfigError("ema_decay must lie in (0,1)");
  if (eval_batch == 0) throw ConfigError("eval batch must be positive");
}

Adam::Adam(std::vector<NamedTensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* node = params_[i].tensor.node();
    if (node->grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    auto w = params_[i].tensor.mutable_data();
    const auto& g = node->grad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void write_epoch_log_header(std::ostream& os) { os << "epoch,train_loss,cce,dice,w_cce,w_dice,kl,val_f1,val_acc\n"; }

void write_epoch_log_row(std::ostream& os, const EpochLog& r) {
  os << r.epoch << ',' << fmt_real(r.train_loss) << ',' << fmt_real(r.cce) << ',' << fmt_real(r.dice) << ','
     << fmt_real(r.w_cce) << ',' << fmt_real(r.w_dice) << ',' << fmt_real(r.kl) << ',' << fmt_real(r.val_f1) << ','
     << fmt_real(r.val_acc) << '\n';
}

Tensor make_batch(std::span<const pcg::Segment> segments, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const std::size_t t = segments[indices[0]].values.size();
  std::vector<double> values;
  values.reserve(indices.size() * t);
  for (auto i : indices) {
    const auto& v = segments[i].values;
    if (v.size() != t) throw ShapeError("segments in one batch differ in length");
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor::from({indices.size(), t, 1}, std::move(values));
}

std::vector<int> labels_of(std::span<const pcg::Segment> segments, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(pcg::as_int(segments[i].label));
  return out;
}

pcg::MetricsReport Predictions::metrics() const { return pcg::compute_metrics(labels, predicted, scores); }

Predictions predict(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> indices,
                    std::size_t batch, bool keep_bottleneck) {
  NoGradGuard guard;
  Predictions out;
  out.labels = labels_of(segments, indices);
  const auto ctx = ForwardContext::infer();
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const auto chunk = indices.subspan(start, std::min(batch, indices.size() - start));
    const auto result = net.forward_full(make_batch(segments, chunk), ctx);
    const auto probs = result.probs.data();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      out.scores.push_back(probs[2 * b + 1]);
      out.predicted.push_back(probs[2 * b + 1] > probs[2 * b] ? 1 : 0);
    }
    if (keep_bottleneck) {
      const std::size_t f = result.bottleneck.dim(1);
      const auto z = result.bottleneck.data();
      for (std::size_t b = 0; b < chunk.size(); ++b)
        out.bottleneck.emplace_back(z.begin() + b * f, z.begin() + (b + 1) * f);
    }
  }
  return out;
}

void recalibrate_norms(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> indices,
                       std::size_t batch) {
  if (indices.empty()) return;
  NoGradGuard guard;
  auto norms = net.norms();
  std::vector<double> momenta;
  for (auto* n : norms) momenta.push_back(n->stats.momentum);
  const ForwardContext ctx{false, true, nullptr};
  std::size_t k = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch, ++k) {
    for (auto* n : norms) n->stats.momentum = 1.0 / static_cast<double>(k + 1);
    net.forward(make_batch(segments, indices.subspan(start, std::min(batch, indices.size() - start))), ctx);
  }
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i]->stats.momentum = momenta[i];
}

namespace {

void require_both_classes(std::span<const pcg::Segment> segments, std::span<const std::size_t> idx,
                          const char* split) {
  std::size_t counts[2] = {0, 0};
  for (auto i : idx) ++counts[pcg::as_int(segments[i].label)];
  if (counts[0] == 0 || counts[1] == 0) {
    throw DataError(std::string(split) + " split has no " + (counts[0] == 0 ? "normal" : "abnormal") +
                    " segments (" + std::to_string(idx.size()) + " total)");
  }
}

}  // namespace

TrainState train_fold(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const TrainHyper& hyper, Rng& rng,
                      const EpochCallback& on_epoch) {
  hyper.validate();
  require_both_classes(segments, train_idx, "training");
  require_both_classes(segments, val_idx, "validation");

  TrainState state;
  state.weights.decay = hyper.ema_decay;
  state.weights.dynamic = hyper.dynamic_weighting;
  Adam opt(net.parameters(), hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps);
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochLog row;
    row.epoch = epoch;
    row.w_cce = state.weights.w_cce;
    row.w_dice = state.weights.w_dice;
    double sum_loss = 0, sum_cce = 0, sum_dice = 0, sum_kl = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::span<const std::size_t> chunk(order.data() + start, std::min(hyper.batch, order.size() - start));
      Rng step_rng = rng.fork();
      const auto ctx = ForwardContext::train(step_rng);
      const Tensor probs = net.forward(make_batch(segments, chunk), ctx);
      const auto labels = labels_of(segments, chunk);
      const auto task = composite_loss(probs, one_hot(labels), state.weights, hyper.dice_mode);
      const Tensor kl = net.kl();
      const Tensor loss = total_loss(task.loss, kl, hyper.lambda);
      if (!std::isfinite(loss.item())) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      backward(loss);
      opt.step();
      sum_loss += loss.item();
      sum_cce += task.cce;
      sum_dice += task.dice;
      sum_kl += kl.item();
      ++steps;
    }
    row.train_loss = sum_loss / static_cast<double>(steps);
    row.cce = sum_cce / static_cast<double>(steps);
    row.dice = sum_dice / static_cast<double>(steps);
    row.kl = sum_kl / static_cast<double>(steps);
    state.weights = state.weights.updated(row.cce, row.dice);
    if (hyper.bn_recalibration > 0) {
      std::vector<std::size_t> subset(order.begin(), order.begin() + std::min(hyper.bn_recalibration, order.size()));
      recalibrate_norms(net, segments, subset, hyper.batch);
    }

    const auto val = predict(net, segments, val_idx, hyper.eval_batch).metrics();
    row.val_f1 = val.f1;
    row.val_acc = val.accuracy;
    state.epoch = epoch;
    state.log.push_back(row);

    if (val.f1 > state.best_val_f1) {
      state.best_val_f1 = val.f1;
      state.best_epoch = epoch;
      state.best_state = capture_state(net);
      state.since_improvement = 0;
    } else {
      ++state.since_improvement;
    }
    if (on_epoch) on_epoch(state);
    if (state.since_improvement > hyper.patience) break;
  }
  restore_state(net, state.best_state);
  return state;
}

}  // namespace qivc
