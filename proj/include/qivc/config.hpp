#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qivc/loss.hpp"
#include "qivc/net.hpp"
#include "qivc/pcg/folds.hpp"
#include "qivc/train.hpp"

namespace qivc {

/// Every tunable of a run, flat. Text form is one `key = value` per line,
/// `#` starts a comment; to_text() emits every key in a fixed order so the
/// resolved configuration can be echoed and diffed.
struct RunConfig {
  // data and outputs
  std::string manifest;
  std::string data_dir;
  std::string cache;  // empty: <out_dir>/segments.qvc
  std::string out_dir = "run";
  std::string checkpoint;

  // sampler and variational layer
  std::size_t k = 5;
  double p = 0.05;
  double lambda = 1e-5;
  double prior_var = 0.01;
  bool rescale_sqrt_n = false;

  // architecture
  std::vector<std::size_t> filters{16, 32};
  std::size_t kernel_size = 7;
  bool pool_between = true;
  std::size_t dense_width = 32;
  std::string activation = "relu";
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // training
  double lr = 1e-3;
  std::size_t batch = 256;
  std::size_t epochs = 500;
  std::size_t patience = 50;
  std::size_t folds = 5;
  std::string fold = "all";  // "all" or a fold index
  double val_fraction = 0.1;
  std::uint64_t seed = 42;
  std::string grouping = "segment";  // segment | recording
  std::size_t jobs = 1;
  std::string loss_weighting = "dynamic";  // dynamic | fixed
  double ema_decay = 0.9;
  std::string dice_mode = "all";  // all | positive

  // evaluation
  std::string split = "test";  // test | val
  std::vector<double> snr_list{25, 20, 15, 10, 5};
  std::size_t eval_batch = 1;  // >1 ties the last bits of each score to its batch-mates

  // noise diagnostics
  std::vector<std::size_t> noise_shape{7, 16, 32};
  std::size_t noise_trials = 1000;

  // synthetic data
  std::size_t synth_count = 500;
  double synth_abnormal_fraction = 0.5;
  double synth_snr = 25.0;
  double synth_rate = 2000.0;

  static std::vector<std::string> keys();
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string to_text() const;
  /// Applies `text` on top of `base`.
  static RunConfig parse(const std::string& text, RunConfig base);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path, RunConfig base);
  static RunConfig load(const std::filesystem::path& path);

  /// Throws ConfigError on the first value outside its module's contract.
  void validate() const;

  NetworkConfig network() const;
  TrainHyper hyper() const;
  pcg::FoldGrouping fold_grouping() const;
  /// Folds selected by `fold`.
  std::vector<std::size_t> selected_folds() const;
};

}  // namespace qivc
