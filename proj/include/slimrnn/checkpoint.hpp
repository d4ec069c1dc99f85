// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint layout (all integers little-endian):
//
//   "SLIMRNN1"                     8 bytes magic
//   version                        u32
//   snapshot length, snapshot      u64, UTF-8 bytes
//   repeated until the trailer:
//     name length, name            u32, UTF-8 bytes
//     element count, elements      u64, IEEE-754 binary64 each
//   CRC-32 of all preceding bytes  u32
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "slimrnn/errors.hpp"

namespace slimrnn {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'L', 'I', 'M', 'R', 'N', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedGroup {
  std::string name;
  std::vector<double> values;

  bool operator==(const NamedGroup&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string snapshot;
  std::vector<NamedGroup> groups;

  const NamedGroup* find(std::string_view name) const {
    for (const auto& g : groups) {
      if (g.name == name) return &g;
    }
    return nullptr;
  }

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class UInt>
void put_le(std::vector<unsigned char>& out, UInt v) {
  for (std::size_t k = 0; k < sizeof(UInt); ++k) {
    out.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::span<const unsigned char> take(std::size_t count) {
    if (count > remaining()) throw PersistenceError("checkpoint truncated");
    auto s = bytes_.subspan(pos_, count);
    pos_ += count;
    return s;
  }

  template <class UInt>
  UInt get_le() {
    const auto s = take(sizeof(UInt));
    UInt v = 0;
    for (std::size_t k = 0; k < sizeof(UInt); ++k) v |= static_cast<UInt>(s[k]) << (8 * k);
    return v;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, ckpt.version);
  detail::put_le<std::uint64_t>(out, ckpt.snapshot.size());
  out.insert(out.end(), ckpt.snapshot.begin(), ckpt.snapshot.end());
  for (const auto& g : ckpt.groups) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.name.size()));
    out.insert(out.end(), g.name.begin(), g.name.end());
    detail::put_le<std::uint64_t>(out, g.values.size());
    for (double v : g.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out));
  return out;
}

/// Throws PersistenceError on a bad magic, truncation or CRC mismatch, and
/// PersistenceError with version_mismatch() set for another format version.
inline Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 4 + 8 + 4) {
    throw PersistenceError("checkpoint truncated");
  }
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw PersistenceError("not a checkpoint file (bad magic)");
  }
  detail::Reader header(bytes.subspan(kCheckpointMagic.size()));
  const auto version = header.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw PersistenceError("checkpoint format version " + std::to_string(version) +
                               ", expected " + std::to_string(kCheckpointVersion),
                           true);
  }
  const auto body = bytes.first(bytes.size() - 4);
  detail::Reader trailer(bytes.last(4));
  if (trailer.get_le<std::uint32_t>() != detail::crc32_of(body)) {
    throw PersistenceError("checkpoint integrity check failed (CRC mismatch)");
  }

  detail::Reader r(body.subspan(kCheckpointMagic.size() + 4));
  Checkpoint ckpt;
  ckpt.version = version;
  const auto snap_len = r.get_le<std::uint64_t>();
  const auto snap = r.take(snap_len);
  ckpt.snapshot.assign(snap.begin(), snap.end());
  while (r.remaining() > 0) {
    NamedGroup g;
    const auto name_len = r.get_le<std::uint32_t>();
    const auto name = r.take(name_len);
    g.name.assign(name.begin(), name.end());
    const auto count = r.get_le<std::uint64_t>();
    if (count > r.remaining() / 8) throw PersistenceError("checkpoint truncated");
    g.values.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      g.values.push_back(std::bit_cast<double>(r.get_le<std::uint64_t>()));
    }
    ckpt.groups.push_back(std::move(g));
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PersistenceError("write to '" + path + "' failed");
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace slimrnn
