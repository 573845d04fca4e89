#include "qivc/pcg/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qivc/binary.hpp"
#include "qivc/error.hpp"
#include "qivc/fileio.hpp"

namespace qivc::pcg {

WavData read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  binary::Reader r(bytes, "wav '" + path.string() + "'");
  if (r.take(4) != "RIFF") throw DataError("wav '" + path.string() + "': missing RIFF tag");
  r.le<std::uint32_t>();
  if (r.take(4) != "WAVE") throw DataError("wav '" + path.string() + "': missing WAVE tag");
  WavData wav;
  std::uint16_t bits = 0, block_align = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const std::string_view id = r.take(4);
    const auto size = r.le<std::uint32_t>();
    if (id == "fmt ") {
      binary::Reader f(r.take(size), "wav fmt chunk");
      const auto format = f.le<std::uint16_t>();
      wav.channels = f.le<std::uint16_t>();
      wav.sample_rate = f.le<std::uint32_t>();
      f.le<std::uint32_t>();
      block_align = f.le<std::uint16_t>();
      bits = f.le<std::uint16_t>();
      if (format != 1 || bits != 16) {
        throw DataError("wav '" + path.string() + "': only 16-bit PCM is supported (format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bits)");
      }
      if (wav.channels == 0 || block_align != 2 * wav.channels) throw DataError("wav '" + path.string() + "': bad block alignment");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("wav '" + path.string() + "': data chunk before fmt chunk");
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      binary::Reader d(r.take(avail), "wav data chunk");
      const std::size_t frames = avail / block_align;
      wav.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        wav.samples[i] = static_cast<std::int16_t>(d.le<std::uint16_t>()) / 32768.0;
        d.skip(block_align - 2u);
      }
      if (size % 2 && r.remaining() > 0) r.skip(1);
      return wav;
    } else {
      r.skip(std::min<std::size_t>(size + (size % 2), r.remaining()));
    }
  }
  throw DataError("wav '" + path.string() + "': no data chunk");
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, std::uint32_t sample_rate) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  binary::put_le<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  binary::put_le<std::uint32_t>(out, 16);
  binary::put_le<std::uint16_t>(out, 1);
  binary::put_le<std::uint16_t>(out, 1);
  binary::put_le<std::uint32_t>(out, sample_rate);
  binary::put_le<std::uint32_t>(out, sample_rate * 2);
  binary::put_le<std::uint16_t>(out, 2);
  binary::put_le<std::uint16_t>(out, 16);
  out += "data";
  binary::put_le<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    binary::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  write_file(path, out);
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 3) {
      throw DataError("manifest '" + path.string() + "' line " + std::to_string(line_no) + ": expected 3 fields");
    }
    if (line_no == 1 && fields[0] == "recording_id") continue;
    entries.push_back({fields[0], fields[1], parse_label(fields[2])});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::string out = "recording_id,relative_path,label\n";
  for (const auto& e : entries) out += e.recording_id + "," + e.relative_path + "," + std::string(to_string(e.label)) + "\n";
  write_file(path, out);
}

void write_segment_cache(const std::filesystem::path& path, const std::vector<Segment>& segments) {
  std::string out = "QIVC";
  binary::put_le<std::uint16_t>(out, kSegmentCacheVersion);
  binary::put_le<std::uint16_t>(out, 0);
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(segments.size()));
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kSegmentLength));
  for (const auto& s : segments) {
    if (s.values.size() != kSegmentLength) throw DataError("segment cache: segment '" + s.id() + "' has wrong length");
    if (s.recording_id.size() > 0xffff) throw DataError("segment cache: recording id too long");
    binary::put_u8(out, static_cast<std::uint8_t>(s.label));
    binary::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.recording_id.size()));
    out += s.recording_id;
    binary::put_le<std::uint32_t>(out, s.window_index);
    for (double v : s.values) binary::put_f32(out, static_cast<float>(v));
  }
  write_file(path, out);
}

std::vector<Segment> read_segment_cache(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  binary::Reader r(bytes, "segment cache '" + path.string() + "'");
  if (r.take(4) != "QIVC") throw DataError("segment cache '" + path.string() + "': bad magic");
  const auto version = r.le<std::uint16_t>();
  if (version != kSegmentCacheVersion) {
    throw DataError("segment cache '" + path.string() + "': unsupported version " + std::to_string(version));
  }
  r.le<std::uint16_t>();
  const auto count = r.le<std::uint32_t>();
  const auto length = r.le<std::uint32_t>();
  if (length != kSegmentLength) throw DataError("segment cache: segment length " + std::to_string(length) + " != 2000");
  std::vector<Segment> segments(count);
  for (auto& s : segments) {
    const auto label = r.u8();
    if (label > 1) throw DataError("segment cache: invalid label byte " + std::to_string(label));
    s.label = static_cast<Label>(label);
    s.recording_id = std::string(r.take(r.le<std::uint16_t>()));
    s.window_index = r.le<std::uint32_t>();
    s.values.resize(length);
    for (auto& v : s.values) v = r.f32();
  }
  if (r.remaining() != 0) throw DataError("segment cache '" + path.string() + "': trailing bytes");
  return segments;
}

}  // namespace qivc::pcg
