#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qivc/pcg/signal.hpp"

namespace qivc::pcg {

struct WavData {
  std::vector<double> samples;  // channel 0, scaled to [-1, 1)
  double sample_rate = 0;
  std::uint16_t channels = 1;
};

/// RIFF/WAVE, 16-bit signed little-endian PCM. Multi-channel files keep
/// channel 0 only (callers can warn on `channels > 1`).
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, std::uint32_t sample_rate);

struct ManifestEntry {
  std::string recording_id;
  std::string relative_path;
  Label label = Label::normal;
};

/// CSV `recording_id,relative_path,label`; a header row with those names is
/// skipped, blank lines are ignored.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Segment cache layout (all little-endian):
///   header, 16 bytes: "QIVC", version u16 (=1), reserved u16 (=0),
///                     count u32, length u32 (=2000)
///   record:           label u8, id length u16, id bytes, window index u32,
///                     length × float32 samples
inline constexpr std::uint16_t kSegmentCacheVersion = 1;

void write_segment_cache(const std::filesystem::path& path, const std::vector<Segment>& segments);
std::vector<Segment> read_segment_cache(const std::filesystem::path& path);

}  // namespace qivc::pcg
