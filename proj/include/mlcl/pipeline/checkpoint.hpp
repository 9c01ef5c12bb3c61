#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/numerics/graph.hpp"
#include "mlcl/rpmgen/dataset_io.hpp"

// Checkpoint layout (little-endian):
//   "MLCK" | version u16 | parameter count u32
//   per parameter: name length u16 | name | rank u8 | extents u32... | values f64...
//   CRC32 of everything before it, u32

namespace mlcl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<Parameter*>& params) {
  io_detail::Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>("MLCK"), 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.u16(static_cast<std::uint16_t>(p->name.size()));
    w.bytes(reinterpret_cast<const std::uint8_t*>(p->name.data()), p->name.size());
    w.u8(static_cast<std::uint8_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p->value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      w.u64(bits);
    }
  }
  const std::uint32_t crc = crc32_of(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

/// Loads values into `params`, which must match the stored names and shapes.
inline void decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::vector<Parameter*>& params) {
  if (bytes.size() < 4) throw CheckpointError("checkpoint truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes.data(), body) != stored) throw CheckpointError("checkpoint checksum mismatch");
  try {
    io_detail::Reader r(bytes);
    if (std::memcmp(r.take(4), "MLCK", 4) != 0) throw CheckpointError("not a checkpoint file");
    if (const auto v = r.u16(); v != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(v) + " is not supported");
    }
    const std::uint32_t count = r.u32();
    if (count != params.size()) {
      throw CheckpointError("checkpoint has " + std::to_string(count) + " parameters, network has " +
                            std::to_string(params.size()));
    }
    for (Parameter* p : params) {
      const std::size_t len = r.u16();
      const auto* name = r.take(len);
      if (std::string(reinterpret_cast<const char*>(name), len) != p->name) {
        throw CheckpointError("checkpoint parameter order mismatch at '" + p->name + "'");
      }
      const std::size_t rank = r.u8();
      std::vector<std::size_t> shape;
      for (std::size_t k = 0; k < rank; ++k) shape.push_back(r.u32());
      if (shape != p->value.shape()) throw CheckpointError("shape mismatch for '" + p->name + "'");
      for (double& v : p->value.data()) {
        const std::uint64_t bits = r.u64();
        std::memcpy(&v, &bits, sizeof v);
      }
    }
    r.u32();
    if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint");
  } catch (const DatasetTruncatedError&) {
    throw CheckpointError("checkpoint truncated");
  }
}

inline void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

inline void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
  decode_checkpoint(read_file_bytes(path), params);
}

}  // namespace mlcl
