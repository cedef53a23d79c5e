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
#include <cstddef>
#include <string>

#include "xcodec/dsp/mel.hpp"
#include "xcodec/dsp/stft.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"

namespace xcodec::dsp {

enum class SpectralKind { mel, stft };

inline const char* to_string(SpectralKind k) { return k == SpectralKind::mel ? "mel" : "stft"; }

/// Analysis constants shared by the reconstruction losses and the
/// evaluation distances.
struct SpectralConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t n_mels = 80;
  double log_floor = 1e-5;
  double f_min = 0.0;
  double f_max = -1.0;  // negative selects sample_rate / 2

  double resolved_f_max(int sample_rate) const {
    return f_max < 0.0 ? sample_rate / 2.0 : f_max;
  }
  WindowDescriptor window() const { return {WindowType::hann, n_fft}; }
};

/// Log-magnitude representation the distances compare: log(floor + |X|) on
/// linear bins (stft) or on mel bands (mel).
inline FeatureMatrix log_spectral_features(const Waveform& w, SpectralKind kind,
                                           const SpectralConfig& cfg = {}) {
  const Spectrogram s = stft(w, cfg.n_fft, cfg.hop, cfg.window());
  FeatureMatrix mags = s.magnitudes;
  if (kind == SpectralKind::mel) {
    const auto fb = mel_filterbank(cfg.n_fft, cfg.n_mels, w.sample_rate, cfg.f_min,
                                   cfg.resolved_f_max(w.sample_rate));
    mags = apply_mel(fb, mags);
  }
  for (double& v : mags.data) v = std::log(cfg.log_floor + v);
  return mags;
}

/// Mean absolute difference of log magnitudes between two equal-length
/// signals.
inline double spectral_distance(const Waveform& a, const Waveform& b, SpectralKind kind,
                                const SpectralConfig& cfg = {}) {
  if (a.samples.size() != b.samples.size()) {
    throw ShapeError("spectral_distance: lengths differ (" + std::to_string(a.samples.size()) +
                     " vs " + std::to_string(b.samples.size()) + ")");
  }
  if (a.sample_rate != b.sample_rate) {
    throw ShapeError("spectral_distance: sample rates differ");
  }
  const auto fa = log_spectral_features(a, kind, cfg);
  const auto fb = log_spectral_features(b, kind, cfg);
  double acc = 0.0;
  for (std::size_t i = 0; i < fa.data.size(); ++i) acc += std::abs(fa.data[i] - fb.data[i]);
  return acc / static_cast<double>(fa.data.size());
}

}  // namespace xcodec::dsp
