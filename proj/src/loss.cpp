#include "qivc/loss.hpp"

#include <cmath>
#include <string>

#include "qivc/error.hpp"
#include "qivc/ops.hpp"
#include "qivc/qivconv.hpp"

namespace qivc {

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* op) {
  if (pred.rank() != 2 || pred.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + to_string(pred.shape()) + " and target " +
                     to_string(target.shape()) + " must be matching [B,C]");
  }
}

void check_probabilities(const Tensor& pred) {
  const std::size_t c = pred.dim(1);
  auto v = pred.data();
  for (std::size_t r = 0; r < pred.dim(0); ++r) {
    double total = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = v[r * c + j];
      if (!(p >= 0.0 && p <= 1.0)) throw NumericalError("composite_loss: prediction outside [0,1] in row " + std::to_string(r));
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) throw NumericalError("composite_loss: row " + std::to_string(r) + " does not sum to 1");
  }
}

Tensor positive_column(const Tensor& t) {
  const std::size_t b = t.dim(0), c = t.dim(1);
  std::vector<double> mask(b * c, 0.0);
  for (std::size_t r = 0; r < b; ++r) mask[r * c + (c - 1)] = 1.0;
  return mul(t, Tensor::from(t.shape(), std::move(mask)));
}

}  // namespace

Tensor one_hot(std::span<const int> labels) {
  std::vector<double> v(labels.size() * 2, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("one_hot: label must be 0 or 1");
    v[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::from({labels.size(), 2}, std::move(v));
}

Tensor categorical_cross_entropy(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "cce");
  return scale(sum(mul(target, log_eps(pred, kLogStabilizer))), -1.0 / static_cast<double>(pred.dim(0)));
}

Tensor dice_loss(const Tensor& pred, const Tensor& target, DiceMode mode) {
  check_pair(pred, target, "dice");
  const Tensor p = mode == DiceMode::positive_column ? positive_column(pred) : pred;
  const Tensor y = mode == DiceMode::positive_column ? positive_column(target) : target;
  const Tensor overlap = scale(sum(mul(y, p)), 2.0);
  const Tensor denom = add(sum(y), sum(p));
  return sub(Tensor::scalar(1.0), div(overlap, denom));
}

LossWeights LossWeights::updated(double cce, double dice) const {
  LossWeights next = *this;
  if (!primed) {
    next.ema_cce = cce;
    next.ema_dice = dice;
    next.primed = true;
  } else {
    next.ema_cce = decay * ema_cce + (1.0 - decay) * cce;
    next.ema_dice = decay * ema_dice + (1.0 - decay) * dice;
  }
  const double total = next.ema_cce + next.ema_dice;
  if (dynamic && total > 0 && std::isfinite(total)) {
    next.w_cce = 2.0 * next.ema_cce / total;
    next.w_dice = 2.0 - next.w_cce;
  } else {
    next.w_cce = next.w_dice = 1.0;
  }
  return next;
}

CompositeLoss composite_loss(const Tensor& pred, const Tensor& target, const LossWeights& weights, DiceMode mode) {
  check_pair(pred, target, "composite_loss");
  check_probabilities(pred);
  const Tensor cce = categorical_cross_entropy(pred, target);
  const Tensor dice = dice_loss(pred, target, mode);
  CompositeLoss out;
  out.loss = add(scale(cce, weights.w_cce), scale(dice, weights.w_dice));
  out.cce = cce.item();
  out.dice = dice.item();
  out.weights = weights.updated(out.cce, out.dice);
  return out;
}

}  // namespace qivc
