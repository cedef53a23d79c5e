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
#include <cstddef>
#include <vector>

#include "xcodec/dsp/stft.hpp"
#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"

namespace xcodec::dsp {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelFilterbank {
  FeatureMatrix weights;  // n_mels x bins
  double f_min = 0.0;
  double f_max = 0.0;
  int sample_rate = 0;

  std::size_t n_mels() const { return weights.rows; }
  std::size_t bins() const { return weights.cols; }
};

/// Triangular filters with peaks equally spaced in mel, each row scaled so
/// its largest weight is 1. A filter narrower than the bin spacing gets a
/// unit weight on the bin closest to its peak.
inline MelFilterbank mel_filterbank(std::size_t n_fft, std::size_t n_mels, int sample_rate,
                                    double f_min, double f_max) {
  if (n_mels < 1) throw ParameterError("mel_filterbank: n_mels must be >= 1");
  if (!(f_min >= 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw ParameterError("mel_filterbank: need 0 <= f_min < f_max <= sample_rate/2");
  }
  const std::size_t bins = n_fft / 2 + 1;
  const double m_lo = hz_to_mel(f_min);
  const double m_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_mels + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);

  MelFilterbank fb;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.sample_rate = sample_rate;
  fb.weights = FeatureMatrix(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m];
    const double c = edges[m + 1];
    const double hi = edges[m + 2];
    double peak = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f <= c) {
        w = (f - lo) / (c - lo);
      } else if (f > c && f < hi) {
        w = (hi - f) / (hi - c);
      }
      fb.weights(m, k) = w;
      peak = std::max(peak, w);
    }
    if (peak > 0.0) {
      for (double& w : fb.weights.row(m)) w /= peak;
    } else {
      const auto k = std::min(bins - 1, static_cast<std::size_t>(std::lround(c / bin_hz)));
      fb.weights(m, k) = 1.0;
    }
  }
  return fb;
}

/// Mel-weighted magnitudes, n_mels x frames.
inline FeatureMatrix apply_mel(const MelFilterbank& fb, const FeatureMatrix& magnitudes) {
  if (fb.bins() != magnitudes.rows) {
    throw ShapeError("apply_mel: filterbank has " + std::to_string(fb.bins()) +
                     " bins, spectrogram has " + std::to_string(magnitudes.rows));
  }
  FeatureMatrix out(fb.n_mels(), magnitudes.cols);
  for (std::size_t m = 0; m < fb.n_mels(); ++m) {
    for (std::size_t k = 0; k < fb.bins(); ++k) {
      const double w = fb.weights(m, k);
      if (w == 0.0) continue;
      for (std::size_t f = 0; f < magnitudes.cols; ++f) out(m, f) += w * magnitudes(k, f);
    }
  }
  return out;
}

}  // namespace xcodec::dsp
