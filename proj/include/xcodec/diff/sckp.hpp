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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xcodec/binary_io.hpp"
#include "xcodec/error.hpp"

// "SCKP" checkpoint container:
//   magic "SCKP" | version u32 | count u32 |
//   count x { name_len u32 | name utf-8 | rank u32 | dims u32... | values f64... }
namespace xcodec::diff {

inline constexpr std::uint32_t kSckpVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

inline std::vector<char> encode_sckp(const std::vector<NamedArray>& entries) {
  io::ByteWriter w;
  w.bytes("SCKP");
  w.u32(kSckpVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    std::size_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.values.size()) {
      throw ShapeError("sckp: entry '" + e.name + "' dims disagree with value count");
    }
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name);
    w.u32(static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) w.u32(d);
    for (double v : e.values) w.f64(v);
  }
  return w.buffer();
}

inline std::vector<NamedArray> decode_sckp(const std::vector<char>& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.bytes(4) != "SCKP") throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kSckpVersion) {
    throw VersionError(what + ": checkpoint version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kSckpVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray e;
    const std::uint32_t name_len = r.u32();
    e.name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(what + ": implausible rank for '" + e.name + "'");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.u32());
      n *= e.dims.back();
    }
    r.need(static_cast<std::size_t>(n * 8));
    e.values.resize(static_cast<std::size_t>(n));
    for (auto& v : e.values) v = r.f64();
    out.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

inline void write_sckp(const std::filesystem::path& path, const std::vector<NamedArray>& entries) {
  io::write_file_atomic(path, encode_sckp(entries));
}

inline std::vector<NamedArray> read_sckp(const std::filesystem::path& path) {
  return decode_sckp(io::read_file(path), path.string());
}

}  // namespace xcodec::diff
