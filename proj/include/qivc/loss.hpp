#pragma once

#include <span>

#include "qivc/tensor.hpp"

namespace qivc {

/// One-hot [B,2] targets from 0/1 labels.
Tensor one_hot(std::span<const int> labels);

/// -(1/B) Σ_i Σ_c y_ic log(ŷ_ic + 1e-8).
Tensor categorical_cross_entropy(const Tensor& pred, const Tensor& target);

enum class DiceMode {
  all_classes,      // every entry of y and ŷ, flattened
  positive_column,  // abnormal-class column only
};

/// 1 - 2 Σ yŷ / (Σ y + Σ ŷ).
Tensor dice_loss(const Tensor& pred, const Tensor& target, DiceMode mode = DiceMode::all_classes);

/// Dynamic weights for the CCE and Dice terms. Each update folds the latest
/// loss magnitudes into an exponential moving average and sets
/// w_i = 2·ema_i / (ema_cce + ema_dice), so the larger loss gets the larger
/// weight and the weights always sum to 2. With `dynamic` off both stay 1.
struct LossWeights {
  double w_cce = 1.0;
  double w_dice = 1.0;
  double ema_cce = 0.0;
  double ema_dice = 0.0;
  double decay = 0.9;
  bool dynamic = true;
  bool primed = false;  // false until the first update seeds the averages

  LossWeights updated(double cce, double dice) const;
};

struct CompositeLoss {
  Tensor loss;  // w_cce·CCE + w_dice·Dice with the incoming weights
  double cce = 0;
  double dice = 0;
  LossWeights weights;  // weights after folding in this batch
};

/// Throws NumericalError unless `pred` rows are probability vectors.
CompositeLoss composite_loss(const Tensor& pred, const Tensor& target, const LossWeights& weights,
                             DiceMode mode = DiceMode::all_classes);

}  // namespace qivc
