#include "qivc/pcg/preprocess.hpp"

#include <cmath>

#include "qivc/error.hpp"

namespace qivc::pcg {

std::vector<std::vector<double>> segment(const Recording& rec, double seconds) {
  rec.validate();
  const auto width = static_cast<std::size_t>(std::llround(seconds * rec.sample_rate));
  if (width == 0) throw ConfigError("segment: window shorter than one sample");
  const std::size_t count = rec.samples.size() / width;
  std::vector<std::vector<double>> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    auto first = rec.samples.begin() + static_cast<std::ptrdiff_t>(w * width);
    windows.emplace_back(first, first + static_cast<std::ptrdiff_t>(width));
  }
  return windows;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::none: return "none";
    case RejectReason::non_finite: return "non_finite";
    case RejectReason::all_zero: return "all_zero";
  }
  return "none";
}

std::vector<double> resample_linear(std::span<const double> window, std::size_t length) {
  if (window.empty() || length == 0) throw ConfigError("resample_linear: empty input or output");
  std::vector<double> out(length);
  const std::size_t n = window.size();
  if (n == 1 || length == 1) {
    std::fill(out.begin(), out.end(), window.front());
    return out;
  }
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(i * (n - 1)) / static_cast<double>(length - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), n - 1);
    const double frac = pos - static_cast<double>(lo);
    out[i] = frac == 0.0 ? window[lo] : window[lo] + frac * (window[lo + 1] - window[lo]);
  }
  return out;
}

FinalizeOutcome finalize_segment(std::span<const double> window, Label label, std::string recording_id,
                                 std::uint32_t window_index, std::size_t length) {
  for (double v : window) {
    if (!std::isfinite(v)) return {std::nullopt, RejectReason::non_finite};
  }
  if (window.empty()) return {std::nullopt, RejectReason::all_zero};
  std::vector<double> values = resample_linear(window, length);
  double mean = 0.0, raw_peak = 0.0;
  for (double v : values) {
    mean += v;
    raw_peak = std::max(raw_peak, std::abs(v));
  }
  mean /= static_cast<double>(values.size());
  double peak = 0.0;
  for (auto& v : values) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  // Rounding in the mean leaves ~1e-16 residue on constant windows.
  if (!(peak > 1e-12 * raw_peak) || peak == 0.0) return {std::nullopt, RejectReason::all_zero};
  for (auto& v : values) v /= peak;
  return {Segment{std::move(values), label, std::move(recording_id), window_index}, RejectReason::none};
}

PreprocessResult preprocess_recording(const Recording& rec, const BandpassConfig& band) {
  const Recording filtered = bandpass(rec, band);
  PreprocessResult result;
  const auto windows = segment(filtered);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    auto outcome = finalize_segment(windows[w], rec.label, rec.id, static_cast<std::uint32_t>(w));
    if (outcome.accepted()) {
      result.segments.push_back(std::move(*outcome.segment));
    } else {
      result.rejections.push_back({rec.id, static_cast<std::uint32_t>(w), outcome.reason});
    }
  }
  return result;
}

}  // namespace qivc::pcg
