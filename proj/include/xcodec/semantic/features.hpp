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
#include <random>
#include <string>
#include <vector>

#include "xcodec/binary_io.hpp"
#include "xcodec/dsp/fft.hpp"
#include "xcodec/dsp/mel.hpp"
#include "xcodec/dsp/stft.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"

namespace xcodec::semantic {

enum class FeatureSource { file, surrogate };

/// Frame-level semantic stream S*, H_s x T.
struct SemanticFeatures {
  FeatureMatrix features;
  double frame_rate = 50.0;
  FeatureSource source = FeatureSource::file;

  std::size_t dim() const { return features.rows; }
  std::size_t frames() const { return features.cols; }
};

inline constexpr std::uint32_t kSfeaVersion = 1;
inline constexpr std::uint64_t kSurrogateSeed = 0x5EED;
inline constexpr std::size_t kSurrogateHop = 320;

// "SFEA" | version u32 | H_s u32 | T u32 | frame_rate_milli u32 | H_s*T f32,
// frame-major (all channels of frame 0, then frame 1, ...).
inline std::vector<char> encode_features(const SemanticFeatures& f) {
  io::ByteWriter w;
  w.bytes("SFEA");
  w.u32(kSfeaVersion);
  w.u32(static_cast<std::uint32_t>(f.dim()));
  w.u32(static_cast<std::uint32_t>(f.frames()));
  w.u32(static_cast<std::uint32_t>(std::lround(f.frame_rate * 1000.0)));
  for (std::size_t t = 0; t < f.frames(); ++t) {
    for (std::size_t h = 0; h < f.dim(); ++h) w.f32(static_cast<float>(f.features(h, t)));
  }
  return w.buffer();
}

inline SemanticFeatures decode_features(const std::vector<char>& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.bytes(4) != "SFEA") throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kSfeaVersion) {
    throw FormatError(what + ": unsupported SFEA version " + std::to_string(version));
  }
  const std::uint32_t hs = r.u32();
  const std::uint32_t t = r.u32();
  const std::uint32_t rate_milli = r.u32();
  const std::size_t expected = 4ull * hs * t;
  if (r.remaining() != expected) {
    throw TruncationError(what + ": payload is " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(expected) + " (4*" +
                          std::to_string(hs) + "*" + std::to_string(t) + ")");
  }
  SemanticFeatures f;
  f.frame_rate = rate_milli / 1000.0;
  f.source = FeatureSource::file;
  f.features = FeatureMatrix(hs, t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t h = 0; h < hs; ++h) {
      const float v = r.f32();
      if (!std::isfinite(v)) {
        throw DataError(what + ": non-finite value at frame " + std::to_string(i) + " channel " +
                        std::to_string(h));
      }
      f.features(h, i) = v;
    }
  }
  return f;
}

inline SemanticFeatures load_features(const std::filesystem::path& path) {
  return decode_features(io::read_file(path), path.string());
}

inline void write_features(const SemanticFeatures& f, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_features(f));
}

namespace detail {

// Fixed random projection 80 -> H_s with orthonormal rows (H_s <= 80) or
// orthonormal columns (H_s > 80).
inline FeatureMatrix surrogate_projection(std::size_t hs, std::size_t n_mels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureMatrix p(hs, n_mels);
  for (double& v : p.data) v = gauss(rng);
  const bool rows_orthonormal = hs <= n_mels;
  const std::size_t count = rows_orthonormal ? hs : n_mels;
  const std::size_t len = rows_orthonormal ? n_mels : hs;
  auto at = [&](std::size_t vec, std::size_t i) -> double& {
    return rows_orthonormal ? p(vec, i) : p(i, vec);
  };
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += at(a, i) * at(b, i);
      for (std::size_t i = 0; i < len; ++i) at(a, i) -= dot * at(b, i);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < len; ++i) norm += at(a, i) * at(a, i);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < len; ++i) at(a, i) /= norm;
  }
  return p;
}

}  // namespace detail

/// Deterministic stand-in for a self-supervised feature extractor, 50 Hz at
/// 16 kHz. Per 320-sample hop: 640-sample Hann frame centred on the hop,
/// 80-band log-mel, fixed seeded projection to H_s dims, then a +-2 frame
/// moving average.
inline SemanticFeatures surrogate_extractor(const dsp::Waveform& w, std::size_t hs,
                                            std::uint64_t seed = kSurrogateSeed) {
  if (w.sample_rate != 16000) {
    throw ParameterError("surrogate_extractor: needs 16000 Hz input, got " +
                         std::to_string(w.sample_rate));
  }
  if (hs == 0) throw ParameterError("surrogate_extractor: H_s must be positive");
  constexpr std::size_t kNfft = 1024, kWin = 640, kMels = 80;
  const std::size_t n = w.samples.size();
  const std::size_t t_count = (n + kSurrogateHop - 1) / kSurrogateHop;
  const auto fb = dsp::mel_filterbank(kNfft, kMels, 16000, 0.0, 8000.0);
  const auto win = dsp::make_window({dsp::WindowType::hann, kWin});
  const auto proj = detail::surrogate_projection(hs, kMels, seed);

  FeatureMatrix projected(hs, t_count);
  std::vector<std::complex<double>> buf(kNfft);
  FeatureMatrix mag(kNfft / 2 + 1, 1);
  for (std::size_t t = 0; t < t_count; ++t) {
    const long start = static_cast<long>(t * kSurrogateHop) - static_cast<long>((kWin - kSurrogateHop) / 2);
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t j = 0; j < kWin; ++j) {
      const long idx = start + static_cast<long>(j);
      if (idx >= 0 && idx < static_cast<long>(n)) buf[j] = w.samples[idx] * win[j];
    }
    dsp::fft_inplace(buf);
    for (std::size_t k = 0; k < mag.rows; ++k) mag(k, 0) = std::abs(buf[k]);
    const auto mel = dsp::apply_mel(fb, mag);
    for (std::size_t h = 0; h < hs; ++h) {
      double acc = 0.0;
      for (std::size_t m = 0; m < kMels; ++m) acc += proj(h, m) * std::log(1e-5 + mel(m, 0));
      projected(h, t) = acc;
    }
  }

  SemanticFeatures out;
  out.frame_rate = 16000.0 / kSurrogateHop;
  out.source = FeatureSource::surrogate;
  out.features = FeatureMatrix(hs, t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t lo = t >= 2 ? t - 2 : 0;
    const std::size_t hi = std::min(t_count - 1, t + 2);
    for (std::size_t h = 0; h < hs; ++h) {
      double acc = 0.0;
      for (std::size_t u = lo; u <= hi; ++u) acc += projected(h, u);
      out.features(h, t) = acc / static_cast<double>(hi - lo + 1);
    }
  }
  return out;
}

/// Resamples the frame axis to exactly target_t frames. Off-by-at-most-two
/// mismatches are fixed by right truncation or last-frame replication; larger
/// ones by per-channel linear interpolation with centre-aligned frames.
inline SemanticFeatures align_frames(const SemanticFeatures& f, long target_t) {
  if (target_t <= 0) throw ParameterError("align_frames: target frame count must be positive");
  const std::size_t target = static_cast<std::size_t>(target_t);
  const std::size_t t = f.frames();
  if (t == 0) throw ParameterError("align_frames: input has no frames");
  if (t == target) return f;
  SemanticFeatures out = f;
  out.features = FeatureMatrix(f.dim(), target);
  const std::size_t gap = t > target ? t - target : target - t;
  if (gap <= 2) {
    for (std::size_t h = 0; h < f.dim(); ++h) {
      for (std::size_t j = 0; j < target; ++j) out.features(h, j) = f.features(h, std::min(j, t - 1));
    }
    return out;
  }
  const double ratio = static_cast<double>(t) / static_cast<double>(target);
  for (std::size_t j = 0; j < target; ++j) {
    const double pos = std::clamp((static_cast<double>(j) + 0.5) * ratio - 0.5, 0.0,
                                  static_cast<double>(t - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, t - 1);
    const double frac = pos - static_cast<double>(i0);
    for (std::size_t h = 0; h < f.dim(); ++h) {
      out.features(h, j) = (1.0 - frac) * f.features(h, i0) + frac * f.features(h, i1);
    }
  }
  out.frame_rate = f.frame_rate / ratio;
  return out;
}

}  // namespace xcodec::semantic
