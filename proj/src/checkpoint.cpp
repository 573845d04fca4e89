#include "qivc/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "qivc/binary.hpp"
#include "qivc/error.hpp"
#include "qivc/fileio.hpp"

namespace qivc {

const std::string& Checkpoint::meta_value(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw DataError("checkpoint: missing metadata key '" + std::string(key) + "'");
}

void Checkpoint::set_meta(std::string key, std::string value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta.emplace_back(std::move(key), std::move(value));
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out = "QVCK";
  binary::put_le<std::uint16_t>(out, kCheckpointVersion);
  binary::put_le<std::uint16_t>(out, 0);
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    binary::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(k.size()));
    out += k;
    binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    out += v;
  }
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (numel(a.shape) != a.values.size()) throw ShapeError("checkpoint: array '" + a.name + "' shape/value mismatch");
    binary::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out += a.name;
    binary::put_u8(out, static_cast<std::uint8_t>(a.shape.size()));
    for (auto d : a.shape) binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : a.values) binary::put_f64(out, v);
  }
  binary::put_le<std::uint64_t>(out, binary::fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw DataError("checkpoint: file too short");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  binary::Reader tail(bytes.substr(bytes.size() - 8), "checkpoint checksum");
  if (tail.le<std::uint64_t>() != binary::fnv1a64(body)) throw DataError("checkpoint: checksum mismatch");
  binary::Reader r(body, "checkpoint");
  if (r.take(4) != "QVCK") throw DataError("checkpoint: bad magic");
  const auto version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  r.le<std::uint16_t>();
  Checkpoint ckpt;
  const auto meta_count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key(r.take(r.le<std::uint16_t>()));
    std::string value(r.take(r.le<std::uint32_t>()));
    ckpt.meta.emplace_back(std::move(key), std::move(value));
  }
  const auto array_count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < array_count; ++i) {
    CheckpointArray a;
    a.name = std::string(r.take(r.le<std::uint16_t>()));
    const auto rank = r.u8();
    for (std::uint8_t d = 0; d < rank; ++d) a.shape.push_back(r.le<std::uint32_t>());
    a.values.resize(numel(a.shape));
    for (auto& v : a.values) v = r.f64();
    ckpt.arrays.push_back(std::move(a));
  }
  if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes before checksum");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

std::vector<CheckpointArray> capture_state(const QivcNet& net) {
  std::vector<CheckpointArray> out;
  for (const auto& group : {net.parameters(), net.buffers()})
    for (const auto& p : group) out.push_back({p.name, p.tensor.shape(), p.tensor.to_vector()});
  return out;
}

void restore_state(QivcNet& net, const std::vector<CheckpointArray>& arrays) {
  std::map<std::string, const CheckpointArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  std::size_t used = 0;
  for (const auto& group : {net.parameters(), net.buffers()}) {
    for (auto p : group) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw DataError("checkpoint: no array named '" + p.name + "'");
      if (it->second->shape != p.tensor.shape()) {
        throw ShapeError("checkpoint: array '" + p.name + "' has shape " + to_string(it->second->shape) +
                         ", network expects " + to_string(p.tensor.shape()));
      }
      std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.mutable_data().begin());
      ++used;
    }
  }
  if (used != arrays.size()) throw DataError("checkpoint: holds arrays the network does not have");
}

}  // namespace qivc
