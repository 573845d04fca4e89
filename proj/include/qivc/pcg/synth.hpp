#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qivc/pcg/signal.hpp"
#include "qivc/rng.hpp"

namespace qivc::pcg {

/// Parameters of the synthetic two-class heart-sound generator.
struct SynthConfig {
  double sample_rate = 2000.0;
  double seconds = 4.0;
  double snr_db = 25.0;  // additive white noise relative to the clean signal
  double murmur_low_hz = 150.0;
  double murmur_high_hz = 350.0;
  double murmur_gain = 0.35;  // murmur peak relative to the S1 peak
};

/// Normal recordings are an S1/S2-like pulse train: Gaussian-windowed
/// low-frequency bursts at a random heart rate in 60-100 bpm. Abnormal
/// recordings add a systolic burst of band-limited noise in the murmur band.
Recording synth_recording(Label label, const SynthConfig& cfg, Rng& rng, std::string id);

/// `count` recordings, the first round(count·abnormal_fraction) of them
/// abnormal; recording i draws from Rng::derive(seed, i).
std::vector<Recording> synth_dataset(std::size_t count, double abnormal_fraction, const SynthConfig& cfg,
                                     std::uint64_t seed);

}  // namespace qivc::pcg
