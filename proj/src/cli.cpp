#include "qivc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "qivc/checkpoint.hpp"
#include "qivc/config.hpp"
#include "qivc/error.hpp"
#include "qivc/fileio.hpp"
#include "qivc/format.hpp"
#include "qivc/pcg/filter.hpp"
#include "qivc/pcg/folds.hpp"
#include "qivc/pcg/io.hpp"
#include "qivc/pcg/metrics.hpp"
#include "qivc/pcg/preprocess.hpp"
#include "qivc/pcg/snr.hpp"
#include "qivc/pcg/synth.hpp"
#include "qivc/qire.hpp"
#include "qivc/train.hpp"

namespace qivc {

namespace {

namespace fs = std::filesystem;

// Stream keys for Rng::derive on the master seed.
constexpr std::uint64_t kStreamNetInit = 0x100;
constexpr std::uint64_t kStreamTrain = 0x200;
constexpr std::uint64_t kStreamHoldout = 0x300;
constexpr std::uint64_t kStreamFolds = 0x400;
constexpr std::uint64_t kStreamNoise = 0x500;
constexpr std::uint64_t kStreamSnr = std::uint64_t{1} << 32;

/// Files written by the running command, so a failure can take them back.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  void write(const fs::path& relative, const std::string& bytes) {
    const fs::path p = claim(relative);
    write_file(p, bytes);
  }

  fs::path claim(const fs::path& relative) {
    const fs::path p = dir_ / relative;
    make_dirs(p.parent_path());
    written_.push_back(p);
    return p;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) {
      fs::remove(*it, ec);
      auto tmp = *it;
      tmp += ".tmp";
      fs::remove(tmp, ec);
    }
    for (auto it = created_.rbegin(); it != created_.rend(); ++it)
      if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
    written_.clear();
    created_.clear();
  }

 private:
  void make_dirs(const fs::path& d) {
    if (d.empty() || fs::exists(d)) return;
    make_dirs(d.parent_path());
    fs::create_directory(d);
    created_.push_back(d);
  }

  fs::path dir_;
  std::vector<fs::path> written_;
  std::vector<fs::path> created_;
};

fs::path cache_path(const RunConfig& cfg) {
  return cfg.cache.empty() ? fs::path(cfg.out_dir) / "segments.qvc" : fs::path(cfg.cache);
}

std::vector<pcg::Segment> load_segments(const RunConfig& cfg) {
  const auto path = cache_path(cfg);
  if (!fs::exists(path)) throw DataError("segment cache '" + path.string() + "' not found (run preprocess first)");
  auto segs = pcg::read_segment_cache(path);
  if (segs.empty()) throw DataError("segment cache '" + path.string() + "' holds no segments");
  return segs;
}

struct FoldPlan {
  std::vector<std::size_t> train, val, test;
};

FoldPlan plan_fold(const RunConfig& cfg, const std::vector<pcg::Segment>& segs, std::size_t fold) {
  std::vector<pcg::Label> labels;
  std::vector<std::string> groups;
  for (const auto& s : segs) {
    labels.push_back(s.label);
    groups.push_back(s.recording_id);
  }
  const std::uint64_t fold_seed = Rng::derive(cfg.seed, kStreamFolds).next_u64();
  const auto split = cfg.fold_grouping() == pcg::FoldGrouping::segment
                         ? pcg::stratified_kfold(labels, cfg.folds, fold_seed)
                         : pcg::grouped_stratified_kfold(labels, groups, cfg.folds, fold_seed);
  FoldPlan plan;
  plan.test = split.folds.at(fold);
  const auto rest = split.complement(fold);
  std::tie(plan.train, plan.val) =
      pcg::stratified_holdout(rest, labels, cfg.val_fraction, Rng::derive(cfg.seed, kStreamHoldout + fold).next_u64());
  return plan;
}

NetworkConfig fold_network(const RunConfig& cfg, std::size_t fold) {
  auto n = cfg.network();
  n.seed = Rng::derive(cfg.seed, kStreamNetInit + fold).next_u64();
  return n;
}

std::string metrics_csv_header() {
  std::ostringstream os;
  pcg::write_metrics_header(os, "fold,split,");
  return os.str();
}

std::string metrics_csv_row(std::size_t fold, const char* split, const pcg::MetricsReport& m) {
  std::ostringstream os;
  os << fold << ',' << split << ',';
  pcg::write_metrics_row(os, m);
  return os.str();
}

/// Test-split metrics with the reliability-based ECE filled in.
pcg::MetricsReport evaluate(const Predictions& p) {
  auto m = p.metrics();
  m.ece = pcg::reliability(p.labels, p.predicted, p.scores).ece;
  return m;
}

// ---------------------------------------------------------------- commands

void cmd_synth(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  pcg::SynthConfig sc;
  sc.sample_rate = cfg.synth_rate;
  sc.snr_db = cfg.synth_snr;
  const auto recs = pcg::synth_dataset(cfg.synth_count, cfg.synth_abnormal_fraction, sc, cfg.seed);
  std::vector<pcg::ManifestEntry> entries;
  for (const auto& r : recs) {
    const fs::path rel = fs::path("wav") / (r.id + ".wav");
    pcg::write_wav(outs.claim(rel), r.samples, static_cast<std::uint32_t>(std::lround(r.sample_rate)));
    entries.push_back({r.id, rel.generic_string(), r.label});
  }
  pcg::write_manifest(outs.claim("manifest.csv"), entries);
  out << "synth: " << recs.size() << " recordings -> " << (outs.dir() / "manifest.csv").string() << '\n';
}

void cmd_preprocess(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  if (cfg.manifest.empty()) throw ConfigError("preprocess needs 'manifest'");
  const fs::path manifest = cfg.manifest;
  const fs::path root = cfg.data_dir.empty() ? manifest.parent_path() : fs::path(cfg.data_dir);
  std::vector<pcg::Segment> segments;
  std::ostringstream rej;
  rej << "recording_id,window_index,reason\n";
  std::size_t rejected = 0, recordings = 0;
  for (const auto& e : pcg::read_manifest(manifest)) {
    const auto wav = pcg::read_wav(root / e.relative_path);
    if (wav.channels > 1) out << "preprocess: " << e.recording_id << " has " << wav.channels << " channels, using the first\n";
    pcg::Recording rec{wav.samples, wav.sample_rate, e.recording_id, e.label};
    auto result = pcg::preprocess_recording(rec);
    for (auto& s : result.segments) segments.push_back(std::move(s));
    for (const auto& r : result.rejections) {
      rej << r.recording_id << ',' << r.window_index << ',' << pcg::to_string(r.reason) << '\n';
      ++rejected;
    }
    ++recordings;
  }
  if (segments.empty()) throw DataError("preprocess produced no segments");
  pcg::write_segment_cache(outs.claim("segments.qvc"), segments);
  outs.write("rejections.csv", rej.str());
  out << "preprocess: " << recordings << " recordings, " << segments.size() << " segments, " << rejected
      << " rejected windows\n";
}

struct FoldResult {
  TrainState state;
  Checkpoint checkpoint;
  std::string log_csv;
  pcg::MetricsReport val, test;
};

FoldResult train_one(const RunConfig& cfg, const std::vector<pcg::Segment>& segs, std::size_t fold,
                     std::ostream& out, std::mutex& out_mutex) {
  const auto plan = plan_fold(cfg, segs, fold);
  QivcNet net(fold_network(cfg, fold));
  Rng rng = Rng::derive(cfg.seed, kStreamTrain + fold);
  std::ostringstream log;
  write_epoch_log_header(log);
  auto on_epoch = [&](const TrainState& s) {
    const auto& r = s.log.back();
    write_epoch_log_row(log, r);
    std::lock_guard lock(out_mutex);
    out << "fold " << fold << " epoch " << r.epoch << " loss " << fmt_real(r.train_loss) << " val_f1 "
        << fmt_real(r.val_f1) << " val_acc " << fmt_real(r.val_acc) << '\n'
        << std::flush;
  };
  FoldResult res;
  res.state = train_fold(net, segs, plan.train, plan.val, cfg.hyper(), rng, on_epoch);
  res.log_csv = log.str();
  const auto eval_batch = cfg.eval_batch;
  res.val = evaluate(predict(net, segs, plan.val, eval_batch));
  res.test = evaluate(predict(net, segs, plan.test, eval_batch));
  res.checkpoint.set_meta("config", cfg.to_text());
  res.checkpoint.set_meta("fold", std::to_string(fold));
  res.checkpoint.set_meta("segments", std::to_string(segs.size()));
  res.checkpoint.set_meta("best_epoch", std::to_string(res.state.best_epoch));
  res.checkpoint.set_meta("best_val_f1", fmt_real(res.state.best_val_f1));
  res.checkpoint.arrays = capture_state(net);
  return res;
}

void cmd_train(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  const auto segs = load_segments(cfg);
  const auto folds = cfg.selected_folds();
  std::vector<FoldResult> results(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
  std::mutex out_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < folds.size();) {
      try {
        results[i] = train_one(cfg, segs, folds[i], out, out_mutex);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::min(cfg.jobs, folds.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::string metrics = metrics_csv_header();
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const fs::path dir = "fold" + std::to_string(folds[i]);
    outs.write(dir / "train_log.csv", results[i].log_csv);
    save_checkpoint(outs.claim(dir / "checkpoint.qvck"), results[i].checkpoint);
    metrics += metrics_csv_row(folds[i], "val", results[i].val);
    metrics += metrics_csv_row(folds[i], "test", results[i].test);
    out << "fold " << folds[i] << ": best epoch " << results[i].state.best_epoch << ", val f1 "
        << fmt_real(results[i].val.f1) << ", test acc " << fmt_real(results[i].test.accuracy) << ", test auc "
        << fmt_real(results[i].test.auc) << '\n';
  }
  outs.write("metrics.csv", metrics);
}

/// A trained network rebuilt from a checkpoint, with the run config it was
/// trained under and the data it refers to.
struct Loaded {
  RunConfig trained;
  std::size_t fold = 0;
  std::unique_ptr<QivcNet> net;
  std::vector<pcg::Segment> segments;
  FoldPlan plan;

  const std::vector<std::size_t>& split(const std::string& name) const { return name == "val" ? plan.val : plan.test; }
};

Loaded load_trained(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("this command needs 'checkpoint'");
  const auto ckpt = load_checkpoint(cfg.checkpoint);
  Loaded l;
  l.trained = RunConfig::parse(ckpt.meta_value("config"));
  l.trained.validate();
  l.fold = std::stoul(ckpt.meta_value("fold"));
  if (!cfg.cache.empty()) l.trained.cache = cfg.cache;
  l.segments = load_segments(l.trained);
  if (std::to_string(l.segments.size()) != ckpt.meta_value("segments")) {
    throw DataError("segment cache holds " + std::to_string(l.segments.size()) + " segments, checkpoint was trained on " +
                    ckpt.meta_value("segments"));
  }
  l.plan = plan_fold(l.trained, l.segments, l.fold);
  l.net = std::make_unique<QivcNet>(fold_network(l.trained, l.fold));
  restore_state(*l.net, ckpt.arrays);
  return l;
}

void cmd_eval(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  auto l = load_trained(cfg);
  const auto val = evaluate(predict(*l.net, l.segments, l.plan.val, cfg.eval_batch));
  const auto test = evaluate(predict(*l.net, l.segments, l.plan.test, cfg.eval_batch));
  outs.write("eval_metrics.csv",
             metrics_csv_header() + metrics_csv_row(l.fold, "val", val) + metrics_csv_row(l.fold, "test", test));
  out << "eval: fold " << l.fold << " val f1 " << fmt_real(val.f1) << ", test acc " << fmt_real(test.accuracy)
      << ", test auc " << fmt_real(test.auc) << '\n';
}

void cmd_robustness(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  auto l = load_trained(cfg);
  const auto& idx = l.split(cfg.split);
  std::ostringstream csv;
  pcg::write_metrics_header(csv, "snr_db,");
  for (double snr : cfg.snr_list) {
    // One noise stream per segment, shared by every SNR level.
    std::vector<pcg::Segment> noisy;
    noisy.reserve(idx.size());
    for (auto i : idx) {
      Rng rng = Rng::derive(cfg.seed, kStreamSnr + i);
      noisy.push_back(pcg::inject_noise_snr(l.segments[i], snr, rng));
    }
    std::vector<std::size_t> all(noisy.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto m = evaluate(predict(*l.net, noisy, all, cfg.eval_batch));
    csv << fmt_real(snr) << ',';
    pcg::write_metrics_row(csv, m);
    out << "robustness: " << fmt_real(snr) << " dB acc " << fmt_real(m.accuracy) << " auc " << fmt_real(m.auc) << '\n';
  }
  outs.write("robustness.csv", csv.str());
}

void cmd_calibrate(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  auto l = load_trained(cfg);
  const auto p = predict(*l.net, l.segments, l.split(cfg.split), cfg.eval_batch);
  const auto diagram = pcg::reliability(p.labels, p.predicted, p.scores);
  std::ostringstream rel;
  pcg::write_reliability_csv(rel, diagram);
  outs.write("reliability.csv", rel.str());
  outs.write("calibration.csv", "split,segments,ece\n" + cfg.split + ',' + std::to_string(p.labels.size()) + ',' +
                                    fmt_real(diagram.ece) + '\n');
  out << "calibrate: " << cfg.split << " ECE " << fmt_real(diagram.ece) << '\n';
}

void cmd_noise_stats(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  QireConfig q;
  q.k = cfg.k;
  q.p = cfg.p;
  q.rescale_sqrt_n = cfg.rescale_sqrt_n;
  Rng rng = Rng::derive(cfg.seed, kStreamNoise);
  const auto stats = noise_statistics(q, cfg.noise_shape, cfg.noise_trials, rng);
  std::ostringstream csv;
  write_noise_statistics_header(csv);
  write_noise_statistics_row(csv, stats);
  outs.write("noise_stats.csv", csv.str());
  out << "noise-stats: " << stats.trials << " draws, mean norm " << fmt_real(stats.mean_norm) << '\n';
}

void cmd_export_latent(const RunConfig& cfg, Outputs& outs, std::ostream& out) {
  auto l = load_trained(cfg);
  const auto& idx = l.split(cfg.split);
  const auto p = predict(*l.net, l.segments, idx, cfg.eval_batch, true);
  std::string csv = "segment_id,label,z1,z2,z3\n";
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& z = p.bottleneck[r];
    if (z.size() < 3) throw ConfigError("bottleneck has " + std::to_string(z.size()) + " dimensions, need 3");
    csv += l.segments[idx[r]].id() + ',' + std::to_string(p.labels[r]) + ',' + fmt_real(z[0]) + ',' +
           fmt_real(z[1]) + ',' + fmt_real(z[2]) + '\n';
  }
  outs.write("latent.csv", csv);
  out << "export-latent: " << idx.size() << " rows\n";
}

struct Command {
  const char* name;
  const char* help;
  void (*run)(const RunConfig&, Outputs&, std::ostream&);
};

const Command kCommands[] = {
    {"synth", "write a synthetic two-class WAV dataset and manifest", cmd_synth},
    {"preprocess", "band-pass, segment and cache the recordings of a manifest", cmd_preprocess},
    {"train", "cross-validated training with early stopping and checkpoints", cmd_train},
    {"eval", "recompute validation and test metrics from a checkpoint", cmd_eval},
    {"robustness", "accuracy and AUC under additive white noise per SNR", cmd_robustness},
    {"calibrate", "reliability bins and expected calibration error", cmd_calibrate},
    {"noise-stats", "empirical statistics of the rotated-ensemble noise", cmd_noise_stats},
    {"export-latent", "first three bottleneck coordinates per segment", cmd_export_latent},
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(std::ostream& err, ExitCode code, const char* kind, const std::string& msg) {
  err << "error: " << kind << ": " << one_line(msg) << '\n';
  return code;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"QiVC-Net heart-sound classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  app.add_option("-c,--config", config_file, "key = value configuration file");
  std::map<std::string, std::string> flags;
  for (const auto& key : RunConfig::keys()) {
    std::string names = "--" + key;
    if (key.find('_') != std::string::npos) {
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      names += ",--" + dashed;
    }
    app.add_option(names, flags[key], "override '" + key + "'");
  }
  for (const auto& c : kCommands) app.add_subcommand(c.name, c.help);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitConfig, "config", e.what());
  }

  const Command* command = nullptr;
  for (const auto& c : kCommands)
    if (app.got_subcommand(c.name)) command = &c;

  std::optional<Outputs> outs;
  try {
    RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::load(config_file);
    for (const auto& key : RunConfig::keys())
      if (app.count("--" + key) > 0) cfg.set(key, flags[key]);
    cfg.validate();
    // Absolute cache path; train records it in the checkpoint config.
    if (command->run == cmd_train || !cfg.cache.empty())
      cfg.cache = fs::absolute(cache_path(cfg)).lexically_normal().string();
    outs.emplace(cfg.out_dir);
    outs->write(std::string(command->name) + ".config.txt", cfg.to_text());
    command->run(cfg, *outs, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    if (outs) outs->rollback();
    return fail(err, kExitConfig, "config", e.what());
  } catch (const NumericalError& e) {
    if (outs) outs->rollback();
    return fail(err, kExitNumerical, "numerical", e.what());
  } catch (const Error& e) {
    if (outs) outs->rollback();
    return fail(err, kExitData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    if (outs) outs->rollback();
    return fail(err, kExitData, "data", e.what());
  } catch (const std::exception& e) {
    if (outs) outs->rollback();
    return fail(err, kExitData, "data", e.what());
  }
}

}  // namespace qivc
