#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "qivc/checkpoint.hpp"
#include "qivc/loss.hpp"
#include "qivc/net.hpp"
#include "qivc/pcg/metrics.hpp"
#include "qivc/pcg/signal.hpp"

namespace qivc {

struct TrainHyper {
  double lr = 1e-3;
  std::size_t batch = 256;
  std::size_t epochs = 500;
  std::size_t patience = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 1e-5;  // KL weight
  bool dynamic_weighting = true;
  double ema_decay = 0.9;
  DiceMode dice_mode = DiceMode::all_classes;
  /// Segments per inference pass. At 1 every score is a function of its
  /// own segment alone; larger batches agree only to the last few bits.
  std::size_t eval_batch = 1;
  /// Training segments used to re-estimate norm statistics after each
  /// epoch; 0 keeps the running averages from the training steps.
  std::size_t bn_recalibration = 128;

  void validate() const;
};

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies the gradients left on the parameters by the last backward().
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double cce = 0;
  double dice = 0;
  double w_cce = 1;
  double w_dice = 1;
  double kl = 0;
  double val_f1 = 0;
  double val_acc = 0;
};

void write_epoch_log_header(std::ostream& os);
void write_epoch_log_row(std::ostream& os, const EpochLog& row);

struct TrainState {
  std::size_t epoch = 0;
  double best_val_f1 = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_improvement = 0;
  std::vector<CheckpointArray> best_state;
  LossWeights weights;
  std::vector<EpochLog> log;
};

/// Stacks segments into a [B, 2000, 1] batch.
Tensor make_batch(std::span<const pcg::Segment> segments, std::span<const std::size_t> indices);
std::vector<int> labels_of(std::span<const pcg::Segment> segments, std::span<const std::size_t> indices);

struct Predictions {
  std::vector<int> labels;
  std::vector<int> predicted;    // 1 iff p(abnormal) > p(normal)
  std::vector<double> scores;    // p(abnormal)
  std::vector<std::vector<double>> bottleneck;

  pcg::MetricsReport metrics() const;
};

/// Posterior-mean inference with running norm statistics.
Predictions predict(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> indices,
                    std::size_t batch, bool keep_bottleneck = false);

/// Replaces every running mean/variance with the average batch statistics
/// of posterior-mean forward passes over `indices`.
void recalibrate_norms(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> indices,
                       std::size_t batch);

/// Called after every epoch with the state as it stands.
using EpochCallback = std::function<void(const TrainState&)>;

/// Trains on `train_idx`, selects on `val_idx` by validation F1 and leaves
/// the best weights loaded in `net`. Throws DataError if either split lacks
/// a class.
TrainState train_fold(QivcNet& net, std::span<const pcg::Segment> segments, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const TrainHyper& hyper, Rng& rng,
                      const EpochCallback& on_epoch = {});

}  // namespace qivc
