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
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "xcodec/dsp/fft.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"

namespace xcodec::dsp {

enum class WindowType { hann, rectangular };

struct WindowDescriptor {
  WindowType type = WindowType::hann;
  std::size_t length = 1024;
};

/// Periodic window samples.
inline std::vector<double> make_window(const WindowDescriptor& d) {
  std::vector<double> w(d.length, 1.0);
  if (d.type == WindowType::hann) {
    for (std::size_t i = 0; i < d.length; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(d.length));
    }
  }
  return w;
}

/// Magnitude spectrogram, bins x frames.
struct Spectrogram {
  FeatureMatrix magnitudes;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  WindowDescriptor window;

  std::size_t bins() const { return magnitudes.rows; }
  std::size_t frames() const { return magnitudes.cols; }
};

inline std::size_t stft_frame_count(std::size_t n, std::size_t hop) { return 1 + n / hop; }

/// Index into the reflect-padded signal: position `i` in [-pad, n + pad).
inline std::size_t reflect_index(long i, long n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= n) return static_cast<std::size_t>(2 * (n - 1) - i);
  return static_cast<std::size_t>(i);
}

inline void check_stft_params(std::size_t n, std::size_t n_fft, std::size_t hop,
                              const WindowDescriptor& window) {
  if (!is_power_of_two(n_fft)) {
    throw ParameterError("stft: n_fft " + std::to_string(n_fft) + " is not a power of two");
  }
  if (hop == 0 || hop > n_fft) throw ParameterError("stft: hop must be in (0, n_fft]");
  if (window.length != n_fft) throw ParameterError("stft: window length must equal n_fft");
  if (n <= n_fft / 2) {
    throw ParameterError("stft: reflect padding of " + std::to_string(n_fft / 2) +
                         " needs more than that many samples, got " + std::to_string(n));
  }
}

/// Complex one-sided STFT, frame-major: result[f][k]. Frames are centred with
/// n_fft/2 reflect padding on both sides.
inline std::vector<std::vector<std::complex<double>>> stft_complex(
    std::span<const double> x, std::size_t n_fft, std::size_t hop,
    std::span<const double> window) {
  const long n = static_cast<long>(x.size());
  const long pad = static_cast<long>(n_fft / 2);
  const std::size_t frames = stft_frame_count(x.size(), hop);
  std::vector<std::vector<std::complex<double>>> out(frames);
  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f * hop) - pad;
    for (std::size_t j = 0; j < n_fft; ++j) {
      buf[j] = x[reflect_index(start + static_cast<long>(j), n)] * window[j];
    }
    fft_inplace(buf);
    out[f].assign(buf.begin(), buf.begin() + static_cast<long>(n_fft / 2 + 1));
  }
  return out;
}

inline Spectrogram stft(const Waveform& w, std::size_t n_fft, std::size_t hop,
                        const WindowDescriptor& window) {
  check_stft_params(w.samples.size(), n_fft, hop, window);
  const auto win = make_window(window);
  const auto spec = stft_complex(w.samples, n_fft, hop, win);
  Spectrogram s;
  s.n_fft = n_fft;
  s.hop = hop;
  s.window = window;
  s.magnitudes = FeatureMatrix(n_fft / 2 + 1, spec.size());
  for (std::size_t f = 0; f < spec.size(); ++f) {
    for (std::size_t k = 0; k < spec[f].size(); ++k) s.magnitudes(k, f) = std::abs(spec[f][k]);
  }
  return s;
}

}  // namespace xcodec::dsp
