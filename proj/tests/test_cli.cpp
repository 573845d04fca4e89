#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "qivc/checkpoint.hpp"
#include "qivc/cli.hpp"
#include "qivc/config.hpp"
#include "qivc/error.hpp"
#include "qivc/fileio.hpp"
#include "qivc/pcg/io.hpp"

using namespace qivc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("qivc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> small_model(const std::string& epochs = "3", const std::string& lr = "3e-3") {
  return {"--filters", "4,8", "--kernel-size", "5", "--dense-width", "8", "--batch", "8",
          "--epochs", epochs, "--patience", "1", "--lr", lr, "--fold", "0", "--seed", "5"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

/// Synthetic recordings preprocessed into `dir`/segments.qvc.
void prepare(const fs::path& dir, std::size_t count = 30) {
  const auto synth = cli({"synth", "--out-dir", (dir / "data").string(), "--synth-count", std::to_string(count),
                          "--seed", "3"});
  ASSERT_EQ(synth.code, 0) << synth.err;
  const auto pre = cli({"preprocess", "--manifest", (dir / "data" / "manifest.csv").string(), "--out-dir",
                        dir.string()});
  ASSERT_EQ(pre.code, 0) << pre.err;
}

std::string csv_row(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(prefix, 0) == 0) return line;
  return {};
}

}  // namespace

TEST(Cli, PreprocessCutsARecordingIntoWindows) {
  const auto dir = fresh_dir("pre");
  std::vector<double> x(21 * 4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = double(i) / 4000;
    x[i] = 0.5 * std::sin(2 * std::numbers::pi * 60 * t) * std::exp(-40 * std::fmod(t, 0.8));
  }
  fs::create_directories(dir / "wav");
  pcg::write_wav(dir / "wav" / "r.wav", x, 4000);
  pcg::write_manifest(dir / "m.csv", {{"r", "wav/r.wav", pcg::Label::abnormal}});
  const auto r = cli({"preprocess", "--manifest", (dir / "m.csv").string(), "--out-dir", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("5 segments"), std::string::npos) << r.out;
  const auto segs = pcg::read_segment_cache(dir / "out" / "segments.qvc");
  ASSERT_EQ(segs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(segs[i].id(), "r:" + std::to_string(i));
    EXPECT_EQ(segs[i].label, pcg::Label::abnormal);
    EXPECT_EQ(segs[i].values.size(), pcg::kSegmentLength);
  }
  EXPECT_EQ(read_file(dir / "out" / "rejections.csv"), "recording_id,window_index,reason\n");
  EXPECT_TRUE(fs::exists(dir / "out" / "preprocess.config.txt"));
  fs::remove_all(dir);
}

TEST(Cli, TrainThenEvaluateReproducesTheRun) {
  const auto dir = fresh_dir("train");
  prepare(dir);
  const auto train = cli(with({"train", "--out-dir", dir.string()}, small_model()));
  ASSERT_EQ(train.code, 0) << train.err;
  const fs::path ckpt = dir / "fold0" / "checkpoint.qvck";
  ASSERT_TRUE(fs::exists(ckpt));
  ASSERT_TRUE(fs::exists(dir / "fold0" / "train_log.csv"));
  const auto metrics = read_file(dir / "metrics.csv");

  const auto eval_dir = dir / "eval";
  const auto e1 = cli({"eval", "--checkpoint", ckpt.string(), "--out-dir", eval_dir.string()});
  ASSERT_EQ(e1.code, 0) << e1.err;
  const auto first = read_file(eval_dir / "eval_metrics.csv");
  const auto e2 = cli({"eval", "--checkpoint", ckpt.string(), "--out-dir", eval_dir.string()});
  ASSERT_EQ(e2.code, 0) << e2.err;
  EXPECT_EQ(read_file(eval_dir / "eval_metrics.csv"), first);
  EXPECT_EQ(e1.out, e2.out);

  // The reloaded network scores both splits exactly as training left it.
  EXPECT_EQ(csv_row(first, "0,val,"), csv_row(metrics, "0,val,"));
  EXPECT_EQ(csv_row(first, "0,test,"), csv_row(metrics, "0,test,"));
  const auto c = load_checkpoint(ckpt);
  const auto val = csv_row(metrics, "0,val,");
  std::vector<std::string> cols;
  std::istringstream row(val);
  for (std::string f; std::getline(row, f, ',');) cols.push_back(f);
  ASSERT_EQ(cols.size(), 12u);
  EXPECT_DOUBLE_EQ(std::stod(cols[9]), std::stod(c.meta_value("best_val_f1")));
  fs::remove_all(dir);
}

TEST(Cli, TrainingIsReproducible) {
  const auto dir = fresh_dir("repro");
  prepare(dir, 20);
  const auto args = with({"train", "--cache", (dir / "segments.qvc").string()}, small_model("2"));
  const auto a = cli(with(args, {"--out-dir", (dir / "a").string()}));
  const auto b = cli(with(args, {"--out-dir", (dir / "b").string()}));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"metrics.csv", "fold0/train_log.csv"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  const auto ca = load_checkpoint(dir / "a" / "fold0" / "checkpoint.qvck");
  const auto cb = load_checkpoint(dir / "b" / "fold0" / "checkpoint.qvck");
  ASSERT_EQ(ca.arrays.size(), cb.arrays.size());
  for (std::size_t i = 0; i < ca.arrays.size(); ++i) EXPECT_EQ(ca.arrays[i].values, cb.arrays[i].values);
  fs::remove_all(dir);
}

TEST(Cli, DiagnosticCommandsWriteTheirTables) {
  const auto dir = fresh_dir("diag");
  prepare(dir, 20);
  ASSERT_EQ(cli(with({"train", "--out-dir", dir.string()}, small_model("1"))).code, 0);
  const auto ckpt = (dir / "fold0" / "checkpoint.qvck").string();

  const auto rob = cli({"robustness", "--checkpoint", ckpt, "--snr-list", "20,5", "--out-dir", dir.string()});
  ASSERT_EQ(rob.code, 0) << rob.err;
  const auto table = read_file(dir / "robustness.csv");
  EXPECT_EQ(table.rfind("snr_db,tp,", 0), 0u);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);

  const auto cal = cli({"calibrate", "--checkpoint", ckpt, "--out-dir", dir.string()});
  ASSERT_EQ(cal.code, 0) << cal.err;
  const auto rel = read_file(dir / "reliability.csv");
  EXPECT_EQ(std::count(rel.begin(), rel.end(), '\n'), 11);
  EXPECT_EQ(read_file(dir / "calibration.csv").rfind("split,segments,ece\ntest,", 0), 0u);

  const auto lat = cli({"export-latent", "--checkpoint", ckpt, "--split", "val", "--out-dir", dir.string()});
  ASSERT_EQ(lat.code, 0) << lat.err;
  EXPECT_EQ(read_file(dir / "latent.csv").rfind("segment_id,label,z1,z2,z3\n", 0), 0u);

  const auto noise = cli({"noise-stats", "--noise-trials", "50", "--out-dir", dir.string()});
  ASSERT_EQ(noise.code, 0) << noise.err;
  EXPECT_EQ(read_file(dir / "noise_stats.csv").rfind("k,p,N,mean_norm,norm_std,elem_mean,elem_var,subspace_energy\n", 0),
            0u);
  fs::remove_all(dir);
}

TEST(Cli, ConfigurationErrorsExitWithTwo) {
  const auto dir = fresh_dir("cfg");
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"train", "--no-such-key", "1", "--out-dir", dir.string()},
           {"noise-stats", "--k", "0", "--out-dir", dir.string()},
           {"noise-stats", "--p", "1.5", "--out-dir", dir.string()},
           {"eval", "--out-dir", dir.string()},
           {"preprocess", "--out-dir", dir.string()},
           {},
       }) {
    const auto r = cli(args);
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  }
  EXPECT_TRUE(fs::is_empty(dir));
  const auto file = dir / "bad.cfg";
  write_file(file, "k = 5\nunknown_key = 3\n");
  EXPECT_EQ(cli({"noise-stats", "--config", file.string(), "--out-dir", (dir / "o").string()}).code, 2);
  EXPECT_FALSE(fs::exists(dir / "o"));
  fs::remove_all(dir);
}

TEST(Cli, DataErrorsExitWithThreeAndLeaveNothingBehind) {
  const auto dir = fresh_dir("data");
  prepare(dir, 4);
  // A manifest whose second entry is missing: the first recording is read,
  // then the whole command is rolled back.
  const auto manifest = read_file(dir / "data" / "manifest.csv");
  write_file(dir / "broken.csv", manifest + "ghost,wav/ghost.wav,normal\n");
  const auto out = dir / "out";
  const auto r = cli({"preprocess", "--manifest", (dir / "broken.csv").string(), "--data-dir",
                      (dir / "data").string(), "--out-dir", out.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error: data: ", 0), 0u) << r.err;
  EXPECT_FALSE(fs::exists(out));

  const auto t = cli(with({"train", "--out-dir", (dir / "t").string(), "--cache", (dir / "nope.qvc").string()},
                          small_model()));
  EXPECT_EQ(t.code, 3);
  EXPECT_FALSE(fs::exists(dir / "t"));

  write_file(dir / "junk.qvck", "not a checkpoint");
  const auto e = cli({"eval", "--checkpoint", (dir / "junk.qvck").string(), "--out-dir", (dir / "e").string()});
  EXPECT_EQ(e.code, 3);
  EXPECT_FALSE(fs::exists(dir / "e"));
  fs::remove_all(dir);
}

TEST(Cli, DivergentTrainingExitsWithFour) {
  const auto dir = fresh_dir("num");
  prepare(dir, 20);
  const auto r = cli(with({"train", "--out-dir", (dir / "t").string(), "--cache", (dir / "segments.qvc").string()},
                          small_model("3", "1e300")));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_EQ(r.err.rfind("error: numerical: ", 0), 0u) << r.err;
  EXPECT_FALSE(fs::exists(dir / "t"));
  fs::remove_all(dir);
}

TEST(Cli, HelpListsTheCommands) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* c : {"synth", "preprocess", "train", "eval", "robustness", "calibrate", "noise-stats", "export-latent"})
    EXPECT_NE(r.out.find(c), std::string::npos) << c;
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.set("filters", "8,16,32");
  c.set("lr", "0.00025");
  c.set("snr_list", "30,0,-5");
  c.set("fold", "3");
  c.set("grouping", "recording");
  const auto text = c.to_text();
  const auto back = RunConfig::parse(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.filters, (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(back.lr, 0.00025);
  EXPECT_EQ(back.snr_list, (std::vector<double>{30, 0, -5}));
  for (const auto& key : RunConfig::keys()) EXPECT_EQ(back.get(key), c.get(key)) << key;
  EXPECT_EQ(RunConfig::parse("# comment\n\n  k = 3  # trailing\n").k, 3u);
}

TEST(RunConfig, RejectsMalformedInput) {
  EXPECT_THROW(RunConfig::parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("k 5\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("k = five\n"), ConfigError);
  RunConfig c;
  c.set("fold", "9");
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.set("grouping", "patient");
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}
