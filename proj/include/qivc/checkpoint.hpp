#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qivc/net.hpp"
#include "qivc/tensor.hpp"

namespace qivc {

struct CheckpointArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Binary container, little-endian throughout:
///   "QVCK", version u16 (=1), reserved u16
///   meta count u32, then per entry: key (u16 length + bytes),
///                                   value (u32 length + bytes)
///   array count u32, then per array: name (u16 length + bytes), rank u8,
///                                    rank × u32 extents, values as f64
///   FNV-1a 64 checksum (u64) of every preceding byte
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<CheckpointArray> arrays;

  const std::string& meta_value(std::string_view key) const;
  void set_meta(std::string key, std::string value);
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `net`, named as in QivcNet::parameters().
std::vector<CheckpointArray> capture_state(const QivcNet& net);
/// Copies values into the existing tensors of `net`; names and shapes must match.
void restore_state(QivcNet& net, const std::vector<CheckpointArray>& arrays);

}  // namespace qivc
