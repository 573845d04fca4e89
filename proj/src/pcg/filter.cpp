#include "qivc/pcg/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qivc/error.hpp"

namespace qivc::pcg {

using cplx = std::complex<double>;

std::complex<double> Biquad::response(double omega) const {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::complex<double> SosFilter::response(double freq_hz, double fs) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
  cplx h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double SosFilter::gain_db(double freq_hz, double fs) const { return 20.0 * std::log10(std::abs(response(freq_hz, fs))); }

SosFilter butterworth_bandpass(std::size_t order, double low_hz, double high_hz, double fs) {
  if (order == 0) throw ConfigError("butterworth: order must be positive");
  if (!(fs > 0) || !(low_hz > 0) || !(high_hz > low_hz) || !(high_hz < fs / 2)) {
    throw ConfigError("butterworth: need 0 < low < high < fs/2 (low=" + std::to_string(low_hz) +
                      ", high=" + std::to_string(high_hz) + ", fs=" + std::to_string(fs) + ")");
  }
  const double pi = std::numbers::pi;
  // Pre-warped edges for s = (z - 1)/(z + 1).
  const double wl = std::tan(pi * low_hz / fs);
  const double wh = std::tan(pi * high_hz / fs);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);
  const double center = 2.0 * std::atan(w0);

  SosFilter filter;
  const auto n = static_cast<double>(order);
  for (std::size_t m = 0; m < order; ++m) {
    const cplx proto = std::polar(1.0, pi * (2.0 * static_cast<double>(m) + n + 1.0) / (2.0 * n));
    if (proto.imag() <= 1e-9) continue;  // conjugates and the real pole are handled below
    const cplx a = proto * (bw / 2.0);
    const cplx d = std::sqrt(a * a - w0 * w0);
    for (const cplx s : {a + d, a - d}) {
      const cplx z = (1.0 + s) / (1.0 - s);
      Biquad q{1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)};
      const double g = 1.0 / std::abs(q.response(center));
      q.b0 *= g;
      q.b2 *= g;
      filter.sections.push_back(q);
    }
  }
  if (order % 2 == 1) {
    // Real prototype pole at s = -1 maps to a real band-pass pole pair.
    const cplx a = -bw / 2.0;
    const cplx d = std::sqrt(a * a - w0 * w0);
    const cplx s1 = a + d, s2 = a - d;
    const cplx z1 = (1.0 + s1) / (1.0 - s1), z2 = (1.0 + s2) / (1.0 - s2);
    const cplx sum = z1 + z2, prod = z1 * z2;
    Biquad q{1.0, 0.0, -1.0, -sum.real(), prod.real()};
    const double g = 1.0 / std::abs(q.response(center));
    q.b0 *= g;
    q.b2 *= g;
    filter.sections.push_back(q);
  }
  return filter;
}

std::vector<double> sosfilt(const SosFilter& filter, std::span<const double> x, bool steady_state_start) {
  std::vector<double> y(x.begin(), x.end());
  double level = x.empty() ? 0.0 : x.front();
  for (const auto& s : filter.sections) {
    double z1 = 0.0, z2 = 0.0;
    if (steady_state_start) {
      const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
      const double out = dc * level;
      z1 = out - s.b0 * level;
      z2 = s.b2 * level - s.a2 * out;
      level = out;
    }
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> filtfilt(const SosFilter& filter, std::span<const double> x, std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  padlen = std::min(padlen, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto fwd = sosfilt(filter, ext, true);
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = sosfilt(filter, fwd, true);
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(padlen), bwd.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

Recording bandpass(const Recording& rec, const BandpassConfig& cfg) {
  rec.validate();
  if (!(rec.sample_rate > 2.0 * cfg.high_hz)) {
    throw DataError("recording '" + rec.id + "': sample rate " + std::to_string(rec.sample_rate) +
                    " Hz is too low for a " + std::to_string(cfg.high_hz) + " Hz band edge");
  }
  const SosFilter filter = butterworth_bandpass(cfg.order, cfg.low_hz, cfg.high_hz, rec.sample_rate);
  Recording out = rec;
  out.samples = filtfilt(filter, rec.samples, 3 * (filter.order() + 1));
  return out;
}

}  // namespace qivc::pcg
