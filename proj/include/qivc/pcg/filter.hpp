#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "qivc/pcg/signal.hpp"

namespace qivc::pcg {

/// Second-order section with a0 = 1, run in transposed direct form II.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  std::complex<double> response(double omega) const;
};

struct SosFilter {
  std::vector<Biquad> sections;

  /// Complex response at `freq_hz` for sampling rate `fs`.
  std::complex<double> response(double freq_hz, double fs) const;
  double gain_db(double freq_hz, double fs) const;
  /// Order of the realized transfer function (two per section).
  std::size_t order() const { return 2 * sections.size(); }
};

/// Digital Butterworth band-pass from an order-N analog prototype: low-pass
/// to band-pass mapping on pre-warped edges, then the bilinear transform.
/// Yields N sections (realized order 2N) with -3 dB at both edges and unit
/// gain at the geometric centre.
SosFilter butterworth_bandpass(std::size_t order, double low_hz, double high_hz, double fs);

/// Causal filtering. With `steady_state_start`, section states start at the
/// steady state for a constant input equal to x[0].
std::vector<double> sosfilt(const SosFilter& filter, std::span<const double> x, bool steady_state_start = false);

/// Forward-backward filtering with odd-reflection padding of `padlen`
/// samples at each end (clamped to size-1).
std::vector<double> filtfilt(const SosFilter& filter, std::span<const double> x, std::size_t padlen);

struct BandpassConfig {
  double low_hz = 25.0;
  double high_hz = 400.0;
  std::size_t order = 4;
};

/// Zero-phase band-pass of a recording, padding 3·(2N+1) samples. Throws
/// DataError when the sampling rate is not above twice the upper edge.
Recording bandpass(const Recording& rec, const BandpassConfig& cfg = {});

}  // namespace qivc::pcg
