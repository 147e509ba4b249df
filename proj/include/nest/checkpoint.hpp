// nest/checkpoint.hpp

// Copyright 2026  nest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nest/errors.hpp"

namespace nest {

// Checkpoint container. On disk (all integers little-endian):
//
//   "NESTCKPT"                      8 bytes magic
//   u32 version (1)
//   u32 tensor count
//   per tensor (sorted by name):
//     u16 name length, UTF-8 name
//     u8 rank, rank x u32 dims
//     row-major float32 payload
//   u64 step
//   u64 x 4 RNG stream state
//   u32 CRC32 of all preceding bytes
//
// Scalars without a slot of their own (quantizer seed, config hash) ride as
// rank-1 [2] tensors holding the raw u64 bit pattern; payload bytes are
// copied verbatim, never interpreted as arithmetic floats.

constexpr char kCkptMagic[8] = {'N', 'E', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

struct TensorBlob {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t Size() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

struct Checkpoint {
  uint64_t step = 0;
  std::array<uint64_t, 4> rng_state{};
  std::map<std::string, TensorBlob> tensors;
};

// Standard reflected CRC-32 (polynomial 0xEDB88320).
inline uint32_t Crc32(const uint8_t *data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

namespace detail {

struct ByteWriter {
  std::vector<uint8_t> bytes;

  void U8(uint8_t v) { bytes.push_back(v); }
  void U16(uint16_t v) {
    bytes.push_back(static_cast<uint8_t>(v));
    bytes.push_back(static_cast<uint8_t>(v >> 8));
  }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void F32(float v) { U32(std::bit_cast<uint32_t>(v)); }
  void Raw(const void *p, size_t n) {
    const auto *b = static_cast<const uint8_t *>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

struct ByteReader {
  const uint8_t *p;
  size_t len;
  size_t pos = 0;

  void Need(size_t n) const {
    if (pos + n > len) throw ChecksumMismatchError("checkpoint: truncated body");
  }
  uint8_t U8() {
    Need(1);
    return p[pos++];
  }
  uint16_t U16() {
    Need(2);
    uint16_t v = static_cast<uint16_t>(p[pos] | p[pos + 1] << 8);
    pos += 2;
    return v;
  }
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t U64() {
    Need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float F32() { return std::bit_cast<float>(U32()); }
  std::string Str(size_t n) {
    Need(n);
    std::string s(reinterpret_cast<const char *>(p + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::vector<uint8_t> SerializeCheckpoint(const Checkpoint &ckpt) {
  detail::ByteWriter w;
  w.Raw(kCkptMagic, 8);
  w.U32(kCkptVersion);
  w.U32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto &[name, blob] : ckpt.tensors) {
    w.U16(static_cast<uint16_t>(name.size()));
    w.Raw(name.data(), name.size());
    w.U8(static_cast<uint8_t>(blob.dims.size()));
    for (uint32_t d : blob.dims) w.U32(d);
    for (float f : blob.data) w.F32(f);
  }
  w.U64(ckpt.step);
  for (uint64_t s : ckpt.rng_state) w.U64(s);
  w.U32(Crc32(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline Checkpoint DeserializeCheckpoint(const std::vector<uint8_t> &bytes) {
  if (bytes.size() < 4) {
    throw ChecksumMismatchError("checkpoint: file too small");
  }
  const size_t body = bytes.size() - 4;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(bytes[body + i]) << (8 * i);
  if (Crc32(bytes.data(), body) != stored) {
    throw ChecksumMismatchError("checkpoint: CRC32 mismatch");
  }
  detail::ByteReader r{bytes.data(), body};
  if (body < 8 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0) {
    throw VersionMismatchError("checkpoint: bad magic");
  }
  r.pos = 8;
  const uint32_t version = r.U32();
  if (version != kCkptVersion) {
    throw VersionMismatchError("checkpoint: unsupported version " +
                               std::to_string(version));
  }
  Checkpoint ckpt;
  const uint32_t count = r.U32();
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.U16();
    const std::string name = r.Str(name_len);
    TensorBlob blob;
    const uint8_t rank = r.U8();
    blob.dims.resize(rank);
    for (auto &d : blob.dims) d = r.U32();
    blob.data.resize(blob.Size());
    for (auto &f : blob.data) f = r.F32();
    ckpt.tensors.emplace(name, std::move(blob));
  }
  ckpt.step = r.U64();
  for (auto &s : ckpt.rng_state) s = r.U64();
  if (r.pos != body) {
    throw ChecksumMismatchError("checkpoint: trailing bytes in body");
  }
  return ckpt;
}

inline void SaveCheckpoint(const Checkpoint &ckpt,
                           const std::filesystem::path &path) {
  const auto bytes = SerializeCheckpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char *>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

inline Checkpoint LoadCheckpoint(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return DeserializeCheckpoint(bytes);
}

// u64 scalars carried as rank-1 [2] bit-pattern tensors.
inline TensorBlob U64Blob(uint64_t v) {
  TensorBlob blob;
  blob.dims = {2};
  blob.data = {std::bit_cast<float>(static_cast<uint32_t>(v)),
               std::bit_cast<float>(static_cast<uint32_t>(v >> 32))};
  return blob;
}

inline uint64_t BlobU64(const TensorBlob &blob) {
  if (blob.dims != std::vector<uint32_t>{2}) {
    throw VersionMismatchError("checkpoint: scalar blob has wrong shape");
  }
  return static_cast<uint64_t>(std::bit_cast<uint32_t>(blob.data[0])) |
         static_cast<uint64_t>(std::bit_cast<uint32_t>(blob.data[1])) << 32;
}

}  // namespace nest
