#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qivc/pcg/filter.hpp"
#include "qivc/pcg/signal.hpp"

namespace qivc::pcg {

/// Consecutive non-overlapping windows of `seconds` each; the trailing
/// remainder is dropped, so recordings shorter than one window yield none.
std::vector<std::vector<double>> segment(const Recording& rec, double seconds = kWindowSeconds);

enum class RejectReason { none, non_finite, all_zero };
std::string_view to_string(RejectReason reason);

struct FinalizeOutcome {
  std::optional<Segment> segment;
  RejectReason reason = RejectReason::none;

  bool accepted() const { return segment.has_value(); }
};

/// Linear-interpolation resample to `length` points (endpoints aligned).
std::vector<double> resample_linear(std::span<const double> window, std::size_t length);

/// Resample, mean-centre and scale to max |v| = 1. Windows with a non-finite
/// sample, or that vanish after centering, are rejected.
FinalizeOutcome finalize_segment(std::span<const double> window, Label label, std::string recording_id,
                                 std::uint32_t window_index, std::size_t length = kSegmentLength);

struct Rejection {
  std::string recording_id;
  std::uint32_t window_index = 0;
  RejectReason reason = RejectReason::none;
};

struct PreprocessResult {
  std::vector<Segment> segments;
  std::vector<Rejection> rejections;
};

/// Band-pass, window and finalize one recording.
PreprocessResult preprocess_recording(const Recording& rec, const BandpassConfig& band = {});

}  // namespace qivc::pcg
