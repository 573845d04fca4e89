#include "qivc/pcg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "qivc/error.hpp"
#include "qivc/pcg/snr.hpp"

namespace qivc::pcg {

namespace {

constexpr double kPi = std::numbers::pi;

void add_burst(std::vector<double>& x, double fs, double center_s, double width_s, double freq_hz, double amp,
               double phase) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>((center_s - 4 * width_s) * fs));
  const auto hi = std::min<std::ptrdiff_t>(n, static_cast<std::ptrdiff_t>((center_s + 4 * width_s) * fs) + 1);
  for (auto i = lo; i < hi; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double u = (t - center_s) / width_s;
    x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * u * u) * std::sin(2 * kPi * freq_hz * (t - center_s) + phase);
  }
}

void add_murmur(std::vector<double>& x, double fs, double start_s, double end_s, const SynthConfig& cfg, Rng& rng) {
  if (end_s <= start_s) return;
  constexpr int kTones = 12;
  double freqs[kTones], phases[kTones];
  for (int j = 0; j < kTones; ++j) {
    freqs[j] = cfg.murmur_low_hz + rng.uniform() * (cfg.murmur_high_hz - cfg.murmur_low_hz);
    phases[j] = 2 * kPi * rng.uniform();
  }
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(start_s * fs));
  const auto hi = std::min<std::ptrdiff_t>(n, static_cast<std::ptrdiff_t>(end_s * fs));
  const double amp = cfg.murmur_gain / std::sqrt(static_cast<double>(kTones) / 2.0);
  for (auto i = lo; i < hi; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double w = std::sin(kPi * (t - start_s) / (end_s - start_s));
    double v = 0;
    for (int j = 0; j < kTones; ++j) v += std::sin(2 * kPi * freqs[j] * t + phases[j]);
    x[static_cast<std::size_t>(i)] += amp * w * w * v;
  }
}

}  // namespace

Recording synth_recording(Label label, const SynthConfig& cfg, Rng& rng, std::string id) {
  if (!(cfg.sample_rate > 0) || !(cfg.seconds > 0)) throw ConfigError("synth: sample rate and duration must be positive");
  const double fs = cfg.sample_rate;
  std::vector<double> x(static_cast<std::size_t>(std::llround(cfg.seconds * fs)), 0.0);
  const double bpm = 60.0 + 40.0 * rng.uniform();
  const double period = 60.0 / bpm;
  const double systole = 0.28 + 0.06 * rng.uniform();
  const double s1_freq = 35.0 + 25.0 * rng.uniform();
  const double s2_freq = 50.0 + 30.0 * rng.uniform();
  for (double beat = -period * rng.uniform(); beat < cfg.seconds + period; beat += period) {
    const double jitter = 0.01 * (rng.uniform() - 0.5);
    const double s1 = beat + jitter;
    const double s2 = s1 + systole;
    add_burst(x, fs, s1, 0.015, s1_freq, 0.9 + 0.2 * rng.uniform(), 2 * kPi * rng.uniform());
    add_burst(x, fs, s2, 0.012, s2_freq, 0.6 + 0.2 * rng.uniform(), 2 * kPi * rng.uniform());
    if (label == Label::abnormal) add_murmur(x, fs, s1 + 0.05, s2 - 0.04, cfg, rng);
  }
  if (cfg.snr_db != kNoNoise) {
    const auto noise = white_noise_for_snr(x, cfg.snr_db, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += noise[i];
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (auto& v : x) v *= 0.8 / peak;  // headroom for 16-bit export
  }
  return {std::move(x), fs, std::move(id), label};
}

std::vector<Recording> synth_dataset(std::size_t count, double abnormal_fraction, const SynthConfig& cfg,
                                     std::uint64_t seed) {
  if (!(abnormal_fraction >= 0 && abnormal_fraction <= 1)) throw ConfigError("synth: abnormal fraction must lie in [0,1]");
  const auto abnormal = static_cast<std::size_t>(std::llround(abnormal_fraction * static_cast<double>(count)));
  std::vector<Recording> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, i);
    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", i);
    out.push_back(synth_recording(i < abnormal ? Label::abnormal : Label::normal, cfg, rng, id));
  }
  return out;
}

}  // namespace qivc::pcg
