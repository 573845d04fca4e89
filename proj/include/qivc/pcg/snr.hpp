#pragma once

#include <limits>
#include <span>
#include <vector>

#include "qivc/pcg/signal.hpp"
#include "qivc/rng.hpp"

namespace qivc::pcg {

/// SNR value meaning "leave the segment untouched".
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

double signal_power(std::span<const double> x);

/// White Gaussian noise with power P_signal / 10^(snr_db/10).
std::vector<double> white_noise_for_snr(std::span<const double> signal, double snr_db, Rng& rng);

/// Adds white noise at `snr_db` (measured before renormalization), then
/// re-centres and rescales to ±1. `kNoNoise` returns the input unchanged.
Segment inject_noise_snr(const Segment& seg, double snr_db, Rng& rng);

}  // namespace qivc::pcg
