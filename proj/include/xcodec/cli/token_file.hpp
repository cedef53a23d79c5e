// Copyright 2026 The xcodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xcodec/binary_io.hpp"
#include "xcodec/error.hpp"
#include "xcodec/rvq/quantizer.hpp"

namespace xcodec::cli {

inline constexpr std::uint32_t kSctkVersion = 1;
inline constexpr std::size_t kSctkHeaderBytes = 4 + 4 + 4 + 8 + 2 + 4 + 2;

/// Persisted token matrix plus what is needed to decode it back to audio.
struct TokenFile {
  std::uint32_t sample_rate = 16000;
  std::uint64_t original_length = 0;  // samples
  std::uint16_t codebook_size = 0;    // K
  rvq::TokenMatrix tokens;            // M x T

  double duration_seconds() const {
    return static_cast<double>(original_length) / static_cast<double>(sample_rate);
  }
  /// m * T * log2(K) / duration.
  double bitrate_bps() const {
    return static_cast<double>(tokens.layers) * static_cast<double>(tokens.frames) *
           std::log2(static_cast<double>(codebook_size)) / duration_seconds();
  }
  bool operator==(const TokenFile&) const = default;
};

inline void validate_token_file(const TokenFile& f, const std::string& what) {
  if (f.codebook_size == 0) throw FormatError(what + ": K must be positive");
  if (f.sample_rate == 0) throw FormatError(what + ": sample rate must be positive");
  if (f.tokens.layers == 0 || f.tokens.layers > 0xFFFF) throw FormatError(what + ": M out of range");
  if (f.tokens.codes.size() != f.tokens.layers * f.tokens.frames) {
    throw FormatError(what + ": token matrix size mismatch");
  }
  for (std::size_t i = 0; i < f.tokens.codes.size(); ++i) {
    if (f.tokens.codes[i] >= f.codebook_size) {
      throw RangeError(what + ": code " + std::to_string(f.tokens.codes[i]) + " at layer " +
                       std::to_string(i / f.tokens.frames) + " frame " +
                       std::to_string(i % f.tokens.frames) + " is not below K=" +
                       std::to_string(f.codebook_size));
    }
  }
}

// "SCTK" | version u32 | sample_rate u32 | original_length u64 | M u16 | T u32
// | K u16 | M*T u16 codes, layer-major.
inline std::vector<char> encode_token_file(const TokenFile& f) {
  validate_token_file(f, "token file");
  io::ByteWriter w;
  w.bytes("SCTK");
  w.u32(kSctkVersion);
  w.u32(f.sample_rate);
  w.u64(f.original_length);
  w.u16(static_cast<std::uint16_t>(f.tokens.layers));
  w.u32(static_cast<std::uint32_t>(f.tokens.frames));
  w.u16(f.codebook_size);
  for (auto c : f.tokens.codes) w.u16(static_cast<std::uint16_t>(c));
  return w.buffer();
}

inline TokenFile decode_token_file(const std::vector<char>& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.bytes(4) != "SCTK") throw FormatError(what + ": bad magic");
  r.need(kSctkHeaderBytes - 4);
  const std::uint32_t version = r.u32();
  if (version != kSctkVersion) {
    throw VersionError(what + ": unsupported SCTK version " + std::to_string(version));
  }
  TokenFile f;
  f.sample_rate = r.u32();
  f.original_length = r.u64();
  const std::uint16_t m = r.u16();
  const std::uint32_t t = r.u32();
  f.codebook_size = r.u16();
  const std::size_t expected = 2ull * m * t;
  if (r.remaining() != expected) {
    throw TruncationError(what + ": payload is " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(expected) + " (2*" +
                          std::to_string(m) + "*" + std::to_string(t) + ")");
  }
  f.tokens = rvq::TokenMatrix(m, t);
  for (auto& c : f.tokens.codes) c = r.u16();
  validate_token_file(f, what);
  return f;
}

inline void write_token_file(const TokenFile& f, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_token_file(f));
}

inline TokenFile read_token_file(const std::filesystem::path& path) {
  return decode_token_file(io::read_file(path), path.string());
}

}  // namespace xcodec::cli
