#pragma once

#include <zlib.h>

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/rpmgen/panel.hpp"
#include "mlcl/rules.hpp"

// Binary dataset container, little-endian:
//
//   header:   "MLCL" | version u16 | grammar u8 | config u8 | panel size u16 | count u32
//   instance: orientation u8 | rule count u8 | rules (substructure, relation, attribute, object: u8 each)
//             | 16 x (object count u8 | objects (position, type, size, color: u8 each))
//             | 16 x raw u8 raster (panel size^2 bytes)
//             | sparse bits (length u8 | ASCII '0'/'1') | dense bits (length u8 | ASCII '0'/'1')
//             | correct index u8 (1..8) | seed u64 | CRC32 u32 of the preceding instance bytes

namespace mlcl {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[4] = {'M', 'L', 'C', 'L'};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DatasetFormatError : DatasetError {
  using DatasetError::DatasetError;
};
struct DatasetVersionError : DatasetError {
  using DatasetError::DatasetError;
};
struct DatasetTruncatedError : DatasetError {
  using DatasetError::DatasetError;
};
struct DatasetChecksumError : DatasetError {
  std::size_t instance;
  DatasetChecksumError(std::size_t i, const std::string& msg) : DatasetError(msg), instance(i) {}
};

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  Grammar grammar = Grammar::PairStyle;
  RpmConfig config = RpmConfig::Center;
  std::uint16_t panel_size = 28;
  std::uint32_t count = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

namespace io_detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b) : buf_(b) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DatasetTruncatedError("dataset truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

inline void write_bits(Writer& w, const MetaTarget& m) {
  const std::string s = m.to_bitstring();
  w.u8(static_cast<std::uint8_t>(s.size()));
  w.bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

inline std::string read_bits(Reader& r) {
  const std::size_t n = r.u8();
  const auto* p = r.take(n);
  return std::string(reinterpret_cast<const char*>(p), n);
}

}  // namespace io_detail

/// Serializes instances (which must share one config and panel size).
inline std::vector<std::uint8_t> encode_dataset(const std::vector<RpmInstance>& instances, RpmConfig config,
                                                std::size_t panel_size) {
  io_detail::Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4);
  w.u16(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(grammar_of(config)));
  w.u8(static_cast<std::uint8_t>(config));
  w.u16(static_cast<std::uint16_t>(panel_size));
  w.u32(static_cast<std::uint32_t>(instances.size()));
  for (const RpmInstance& inst : instances) {
    if (inst.config != config) throw std::invalid_argument("dataset instances must share one config");
    if (inst.rasters.size() != kPanelsPerInstance) throw std::invalid_argument("instance is missing rasters");
    const std::size_t start = w.buffer().size();
    w.u8(static_cast<std::uint8_t>(inst.orientation));
    w.u8(static_cast<std::uint8_t>(inst.structure.size()));
    for (const Rule& r : inst.structure.rules()) {
      w.u8(r.substructure);
      w.u8(r.relation);
      w.u8(r.attribute);
      w.u8(r.object);
    }
    auto panel = [&](const PanelSpec& p) {
      w.u8(static_cast<std::uint8_t>(p.count()));
      for (const auto& o : p.objects) {
        w.u8(o.position);
        w.u8(o.type);
        w.u8(o.size);
        w.u8(o.color);
      }
    };
    for (const auto& p : inst.context) panel(p);
    for (const auto& p : inst.choices) panel(p);
    for (const Raster& r : inst.rasters) {
      if (r.width != panel_size || r.height != panel_size) throw std::invalid_argument("raster size mismatch");
      w.bytes(r.pixels.data(), r.pixels.size());
    }
    io_detail::write_bits(w, encode_sparse(inst.structure));
    io_detail::write_bits(w, encode_dense(inst.structure));
    w.u8(static_cast<std::uint8_t>(inst.correct_index));
    w.u64(inst.seed);
    w.u32(crc32_of(w.buffer().data() + start, w.buffer().size() - start));
  }
  return std::move(w.buffer());
}

struct Dataset {
  DatasetHeader header;
  std::vector<RpmInstance> instances;
};

inline DatasetHeader decode_header(io_detail::Reader& r) {
  const auto* magic = r.take(4);
  if (std::string(reinterpret_cast<const char*>(magic), 4) != std::string(kDatasetMagic, 4)) {
    throw DatasetFormatError("not a dataset file (bad magic)");
  }
  DatasetHeader h;
  h.version = r.u16();
  if (h.version != kDatasetVersion) {
    throw DatasetVersionError("dataset version " + std::to_string(h.version) + " is not supported (expected " +
                              std::to_string(kDatasetVersion) + ")");
  }
  const auto g = r.u8();
  const auto c = r.u8();
  if (g > 1 || c > 2) throw DatasetFormatError("unknown grammar/config code in header");
  h.grammar = static_cast<Grammar>(g);
  h.config = static_cast<RpmConfig>(c);
  if (grammar_of(h.config) != h.grammar) throw DatasetFormatError("header grammar does not match config");
  h.panel_size = r.u16();
  h.count = r.u32();
  return h;
}

inline Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io_detail::Reader r(bytes);
  Dataset ds;
  ds.header = decode_header(r);
  const std::size_t raster_bytes = static_cast<std::size_t>(ds.header.panel_size) * ds.header.panel_size;
  ds.instances.reserve(ds.header.count);
  for (std::uint32_t i = 0; i < ds.header.count; ++i) {
    const std::size_t start = r.pos();
    RpmInstance inst;
    inst.config = ds.header.config;
    const auto orient = r.u8();
    if (orient > 1) throw DatasetFormatError("bad orientation code in instance " + std::to_string(i));
    inst.orientation = static_cast<Orientation>(orient);
    const std::size_t n_rules = r.u8();
    std::vector<Rule> rules;
    for (std::size_t k = 0; k < n_rules; ++k) {
      Rule rule;
      rule.grammar = ds.header.grammar;
      rule.substructure = r.u8();
      rule.relation = r.u8();
      rule.attribute = r.u8();
      rule.object = r.u8();
      rules.push_back(rule);
    }
    auto panel = [&] {
      PanelSpec p;
      const std::size_t n = r.u8();
      for (std::size_t k = 0; k < n; ++k) {
        PanelObject o;
        o.position = r.u8();
        o.type = r.u8();
        o.size = r.u8();
        o.color = r.u8();
        p.objects.push_back(o);
      }
      return p;
    };
    for (auto& p : inst.context) p = panel();
    for (auto& p : inst.choices) p = panel();
    for (std::size_t k = 0; k < kPanelsPerInstance; ++k) {
      Raster ras(ds.header.panel_size, ds.header.panel_size);
      const auto* px = r.take(raster_bytes);
      std::copy(px, px + raster_bytes, ras.pixels.begin());
      inst.rasters.push_back(std::move(ras));
    }
    const std::string sparse = io_detail::read_bits(r);
    const std::string dense = io_detail::read_bits(r);
    inst.correct_index = r.u8();
    inst.seed = r.u64();
    const std::uint32_t expected = crc32_of(bytes.data() + start, r.pos() - start);
    const std::uint32_t stored = r.u32();
    if (expected != stored) {
      throw DatasetChecksumError(i, "checksum mismatch in instance " + std::to_string(i));
    }
    try {
      inst.structure = AbstractStructure(ds.header.grammar, std::move(rules));
    } catch (const std::invalid_argument& e) {
      throw DatasetFormatError("instance " + std::to_string(i) + ": " + e.what());
    }
    if (inst.correct_index < 1 || inst.correct_index > 8) {
      throw DatasetFormatError("instance " + std::to_string(i) + ": correct index out of range");
    }
    if (sparse != encode_sparse(inst.structure).to_bitstring() || dense != encode_dense(inst.structure).to_bitstring()) {
      throw DatasetFormatError("instance " + std::to_string(i) + ": meta-targets do not match structure");
    }
    ds.instances.push_back(std::move(inst));
  }
  if (!r.at_end()) throw DatasetFormatError("trailing bytes after last instance");
  return ds;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError("write failed for '" + path + "'");
}

inline void write_dataset(const std::vector<RpmInstance>& instances, RpmConfig config, std::size_t panel_size,
                          const std::string& path) {
  write_file_bytes(path, encode_dataset(instances, config, panel_size));
}

inline Dataset read_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

/// Whole-file checksum, as 8 lowercase hex digits.
inline std::string file_checksum(const std::vector<std::uint8_t>& bytes) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(bytes.data(), bytes.size()));
  return buf;
}

}  // namespace mlcl
