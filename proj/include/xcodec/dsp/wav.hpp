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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xcodec/binary_io.hpp"
#include "xcodec/error.hpp"

namespace xcodec::dsp {

/// Mono PCM signal in [-1, 1] with its sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }

  void validate() const {
    if (sample_rate <= 0) throw ParameterError("waveform sample_rate must be positive");
    if (samples.empty()) throw ParameterError("waveform must contain at least one sample");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(samples[i])) {
        throw NumericError("waveform sample " + std::to_string(i) + " is not finite");
      }
    }
  }
};

inline constexpr double kPcmScale = 32768.0;

namespace detail {

inline Waveform parse_wav(const std::vector<char>& bytes, const std::string& name) {
  io::ByteReader r(bytes, name);
  if (bytes.size() < 12) throw FormatError(name + ": too short for a RIFF header");
  if (r.bytes(4) != "RIFF") throw FormatError(name + ": missing RIFF magic");
  r.u32();
  if (r.bytes(4) != "WAVE") throw FormatError(name + ": missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.bytes(4);
    const std::uint32_t len = r.u32();
    if (id == "fmt ") {
      if (len < 16) throw FormatError(name + ": fmt chunk too short");
      std::uint16_t format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      std::size_t consumed = 16;
      if (format == 0xFFFE && len >= 40) {
        r.u16();  // cbSize
        r.u16();  // valid bits
        r.u32();  // channel mask
        format = r.u16();  // first two bytes of the subformat GUID
        r.skip(14);
        consumed = 40;
      }
      r.skip(len - consumed + (len & 1u));
      if (format != 1) {
        throw UnsupportedFormatError(name + ": encoding " + std::to_string(format) +
                                     " is not integer PCM");
      }
      if (bits != 16) {
        throw UnsupportedFormatError(name + ": " + std::to_string(bits) +
                                     "-bit samples are not supported (16-bit only)");
      }
      if (channels == 0) throw FormatError(name + ": zero channels");
      if (rate == 0) throw FormatError(name + ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(name + ": data chunk before fmt chunk");
      const std::size_t frame_bytes = 2u * channels;
      if (len > r.remaining()) {
        throw FormatError(name + ": data chunk declares " + std::to_string(len) +
                          " bytes but only " + std::to_string(r.remaining()) + " remain");
      }
      const std::size_t frames = len / frame_bytes;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) acc += r.i16();
        w.samples[f] = acc / (kPcmScale * channels);
      }
      if (w.samples.empty()) throw FormatError(name + ": empty data chunk");
      return w;
    } else {
      r.skip(std::min<std::size_t>(len + (len & 1u), r.remaining()));
    }
  }
  throw FormatError(name + ": no data chunk");
}

}  // namespace detail

inline Waveform load_wav(const std::filesystem::path& path) {
  return detail::parse_wav(io::read_file(path), path.string());
}

/// 16-bit PCM value for a sample: clamp, scale by 2^15, round, clip to int16.
inline std::int16_t to_pcm16(double s) {
  const double c = std::clamp(s, -1.0, 1.0);
  const long v = std::lround(c * kPcmScale);
  return static_cast<std::int16_t>(std::clamp<long>(v, -32768, 32767));
}

inline std::vector<char> encode_wav(const Waveform& w) {
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    if (!std::isfinite(w.samples[i])) {
      throw NumericError("save_wav: sample " + std::to_string(i) + " is not finite");
    }
  }
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  io::ByteWriter out;
  out.bytes("RIFF");
  out.u32(36 + data_bytes);
  out.bytes("WAVE");
  out.bytes("fmt ");
  out.u32(16);
  out.u16(1);
  out.u16(1);
  out.u32(static_cast<std::uint32_t>(w.sample_rate));
  out.u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  out.u16(2);
  out.u16(16);
  out.bytes("data");
  out.u32(data_bytes);
  for (double s : w.samples) out.i16(to_pcm16(s));
  return out.buffer();
}

inline void save_wav(const Waveform& w, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_wav(w));
}

}  // namespace xcodec::dsp
