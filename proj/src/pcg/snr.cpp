#include "qivc/pcg/snr.hpp"

#include <cmath>

#include "qivc/error.hpp"

namespace qivc::pcg {

double signal_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double p = 0.0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(x.size());
}

std::vector<double> white_noise_for_snr(std::span<const double> signal, double snr_db, Rng& rng) {
  if (std::isnan(snr_db)) throw ConfigError("inject_noise_snr: SNR is NaN");
  std::vector<double> noise(signal.size(), 0.0);
  if (snr_db == kNoNoise) return noise;
  const double sigma = std::sqrt(signal_power(signal) / std::pow(10.0, snr_db / 10.0));
  for (auto& n : noise) n = sigma * rng.normal();
  return noise;
}

Segment inject_noise_snr(const Segment& seg, double snr_db, Rng& rng) {
  for (double v : seg.values) {
    if (!std::isfinite(v)) throw DataError("inject_noise_snr: segment '" + seg.id() + "' has non-finite values");
  }
  if (snr_db == kNoNoise) return seg;
  const auto noise = white_noise_for_snr(seg.values, snr_db, rng);
  Segment out = seg;
  double mean = 0.0;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += noise[i];
    mean += out.values[i];
  }
  mean /= static_cast<double>(out.values.size());
  double peak = 0.0;
  for (auto& v : out.values) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0) {
    for (auto& v : out.values) v /= peak;
  }
  return out;
}

}  // namespace qivc::pcg
