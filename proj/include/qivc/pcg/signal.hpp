#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qivc::pcg {

inline constexpr std::size_t kSegmentLength = 2000;
inline constexpr double kWindowSeconds = 4.0;

/// Abnormal is the positive class.
enum class Label : std::uint8_t { normal = 0, abnormal = 1 };

Label parse_label(std::string_view text);
std::string_view to_string(Label label);
inline int as_int(Label label) { return static_cast<int>(label); }

struct Recording {
  std::vector<double> samples;
  double sample_rate = 0.0;
  std::string id;
  Label label = Label::normal;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
  void validate() const;
};

/// One preprocessed window: 2000 zero-mean samples scaled to ±1.
struct Segment {
  std::vector<double> values;
  Label label = Label::normal;
  std::string recording_id;
  std::uint32_t window_index = 0;

  std::string id() const { return recording_id + ":" + std::to_string(window_index); }
};

}  // namespace qivc::pcg
