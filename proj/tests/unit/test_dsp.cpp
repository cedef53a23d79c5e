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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "xcodec/binary_io.hpp"
#include "xcodec/dsp/fft.hpp"
#include "xcodec/dsp/mel.hpp"
#include "xcodec/dsp/spectral.hpp"
#include "xcodec/dsp/stft.hpp"
#include "xcodec/dsp/wav.hpp"

namespace {

using namespace xcodec;
using namespace xcodec::dsp;
using xcodec::testing::gaussian;
using xcodec::testing::uniform;

// Hand-built 16-bit PCM WAV file.
std::vector<char> wav_bytes(const std::vector<std::int16_t>& interleaved, std::uint16_t channels,
                            std::uint32_t rate = 16000) {
  std::vector<char> b;
  auto put = [&](const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    b.insert(b.end(), c, c + n);
  };
  auto u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto u16 = [&](std::uint16_t v) { put(&v, 2); };
  const std::uint32_t data_len = static_cast<std::uint32_t>(interleaved.size() * 2);
  put("RIFF", 4);
  u32(36 + data_len);
  put("WAVE", 4);
  put("fmt ", 4);
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(rate * channels * 2);
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  put("data", 4);
  u32(data_len);
  for (auto s : interleaved) put(&s, 2);
  return b;
}

Waveform sine(double freq, std::size_t n, int sr = 16000, double amp = 0.5) {
  Waveform w{std::vector<double>(n), sr};
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
  }
  return w;
}

// ------------------------------------------------------------------ WAV

TEST(Wav, SilenceDecodesToZeros) {
  const auto w = detail::parse_wav(wav_bytes(std::vector<std::int16_t>(320, 0), 1), "silence");
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), 320u);
  for (double s : w.samples) EXPECT_EQ(s, 0.0);
}

TEST(Wav, ScalingIsOneOver32768) {
  const auto w = detail::parse_wav(wav_bytes({16384}, 1), "half");
  ASSERT_EQ(w.samples.size(), 1u);
  EXPECT_EQ(w.samples[0], 0.5);
}

TEST(Wav, StereoIsDownmixedByChannelMean) {
  const auto a = static_cast<std::int16_t>(0.2 * 32768);
  const auto b = static_cast<std::int16_t>(0.6 * 32768);
  const auto w = detail::parse_wav(wav_bytes({a, b, a, b}, 2), "stereo");
  ASSERT_EQ(w.samples.size(), 2u);
  EXPECT_NEAR(w.samples[0], 0.4, 1.0 / 32768);
  EXPECT_EQ(w.samples[0], w.samples[1]);
}

TEST(Wav, OutOfRangeSamplesAreClamped) {
  EXPECT_EQ(to_pcm16(1.5), 32767);
  EXPECT_EQ(to_pcm16(-1.5), -32768);
  EXPECT_EQ(to_pcm16(1.0), 32767);
  EXPECT_EQ(to_pcm16(-1.0), -32768);
  const auto w = detail::parse_wav(encode_wav({{1.5, -1.5}, 16000}), "clamped");
  EXPECT_EQ(w.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(w.samples[1], -1.0);
}

TEST(Wav, SilenceRoundTrips) {
  const Waveform z{std::vector<double>(100, 0.0), 8000};
  const auto back = detail::parse_wav(encode_wav(z), "z");
  EXPECT_EQ(back.sample_rate, 8000);
  EXPECT_EQ(back.samples, z.samples);
}

TEST(Wav, RandomRoundTripWithinOneLsb) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 5000;
    const Waveform w{uniform(n, rng, -1.0, 1.0), 16000};
    const auto back = detail::parse_wav(encode_wav(w), "random");
    ASSERT_EQ(back.samples.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0 / 32768.0) << "sample " << i;
    }
  }
}

TEST(Wav, FileRoundTripIsStable) {
  const auto dir = xcodec::testing::scratch_dir();
  std::mt19937_64 rng(2);
  const Waveform w{uniform(777, rng, -1.0, 1.0), 22050};
  save_wav(w, dir / "a.wav");
  const auto once = load_wav(dir / "a.wav");
  save_wav(once, dir / "b.wav");
  EXPECT_EQ(io::read_file(dir / "a.wav"), io::read_file(dir / "b.wav"));
  EXPECT_EQ(once.sample_rate, 22050);
}

TEST(Wav, MalformedFilesAreRejected) {
  auto good = wav_bytes({1, 2, 3}, 1);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(detail::parse_wav(bad_magic, "x"), FormatError);
  EXPECT_THROW(detail::parse_wav({good.begin(), good.begin() + 8}, "x"), FormatError);
  EXPECT_THROW(detail::parse_wav({good.begin(), good.end() - 2}, "x"), FormatError);
  auto eight_bit = good;
  eight_bit[34] = 8;  // bits per sample
  EXPECT_THROW(detail::parse_wav(eight_bit, "x"), UnsupportedFormatError);
  auto float_fmt = good;
  float_fmt[20] = 3;  // IEEE float
  EXPECT_THROW(detail::parse_wav(float_fmt, "x"), UnsupportedFormatError);
  EXPECT_THROW(load_wav("/nonexistent/file.wav"), IoError);
}

// ------------------------------------------------------------------ FFT

TEST(Fft, MatchesDirectDft) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {1u, 2u, 8u, 64u}) {
    const auto re = gaussian(n, rng), im = gaussian(n, rng);
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = {re[i], im[i]};
    auto fast = a;
    fft_inplace(fast);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += a[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k) / n);
      }
      EXPECT_NEAR(std::abs(fast[k] - acc), 0.0, 1e-10) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Fft, InverseUndoesForwardUpToScale) {
  std::mt19937_64 rng(4);
  const std::size_t n = 256;
  const auto re = gaussian(n, rng);
  std::vector<std::complex<double>> a(re.begin(), re.end());
  fft_inplace(a);
  fft_inplace(a, true);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i].real() / n, re[i], 1e-12);
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<std::complex<double>> a(6);
  EXPECT_THROW(fft_inplace(a), ParameterError);
}

// ------------------------------------------------------------------ STFT

TEST(Stft, ShapeFollowsCenteredFraming) {
  const Waveform w{std::vector<double>(16000, 0.1), 16000};
  const auto s = stft(w, 1024, 256, {WindowType::hann, 1024});
  EXPECT_EQ(s.bins(), 513u);
  EXPECT_EQ(s.frames(), 1u + 16000u / 256u);
  EXPECT_EQ(stft_frame_count(3200, 256), 13u);
}

TEST(Stft, SilenceIsIdenticallyZero) {
  const Waveform w{std::vector<double>(3000, 0.0), 16000};
  const auto s = stft(w, 512, 128, {WindowType::hann, 512});
  for (double m : s.magnitudes.data) EXPECT_EQ(m, 0.0);
}

TEST(Stft, MagnitudesAreFiniteAndNonNegative) {
  std::mt19937_64 rng(5);
  const Waveform w{gaussian(4000, rng), 16000};
  const auto s = stft(w, 1024, 256, {WindowType::hann, 1024});
  for (double m : s.magnitudes.data) {
    EXPECT_TRUE(std::isfinite(m));
    EXPECT_GE(m, 0.0);
  }
}

TEST(Stft, BinCentredSineConcentratesInOneBin) {
  const std::size_t n_fft = 256, k = 12;
  const int sr = 16000;
  const auto w = sine(static_cast<double>(k) * sr / n_fft, 4096, sr, 0.7);
  const auto s = stft(w, n_fft, 64, {WindowType::rectangular, n_fft});
  // Interior frames see a whole number of periods with no padding.
  for (std::size_t f = n_fft / 64; f + n_fft / 64 < s.frames(); ++f) {
    const double peak = s.magnitudes(k, f);
    EXPECT_NEAR(peak, 0.7 * n_fft / 2.0, 1e-9);
    for (std::size_t b = 0; b < s.bins(); ++b) {
      if (b != k) {
        EXPECT_LT(s.magnitudes(b, f), 1e-9 * peak) << "bin " << b << " frame " << f;
      }
    }
  }
}

TEST(Stft, OneSidedParsevalForOneFrame) {
  std::mt19937_64 rng(6);
  const std::size_t n_fft = 512;
  const auto frame = gaussian(n_fft, rng);
  const auto window = make_window({WindowType::hann, n_fft});
  std::vector<double> windowed(n_fft);
  double energy = 0.0;
  for (std::size_t i = 0; i < n_fft; ++i) {
    windowed[i] = frame[i] * window[i];
    energy += windowed[i] * windowed[i];
  }
  const auto spec = rfft(windowed);
  double total = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double weight = (k == 0 || k == n_fft / 2) ? 1.0 : 2.0;
    total += weight * std::norm(spec[k]);
  }
  EXPECT_NEAR(total / (n_fft * energy), 1.0, 1e-12);
}

TEST(Stft, ParameterValidation) {
  const Waveform w{std::vector<double>(2000, 0.0), 16000};
  EXPECT_THROW(stft(w, 1000, 250, {WindowType::hann, 1000}), ParameterError);
  EXPECT_THROW(stft(w, 1024, 0, {WindowType::hann, 1024}), ParameterError);
  EXPECT_THROW(stft(w, 1024, 256, {WindowType::hann, 512}), ParameterError);
  const Waveform short_w{std::vector<double>(512, 0.0), 16000};
  EXPECT_THROW(stft(short_w, 1024, 256, {WindowType::hann, 1024}), ParameterError);
}

TEST(Stft, HannWindowIsPeriodic) {
  const auto w = make_window({WindowType::hann, 8});
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[4], 1.0, 1e-15);
  EXPECT_NEAR(w[2], w[6], 1e-15);
}

// ------------------------------------------------------------------ mel

TEST(Mel, ScaleConversions) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(hz_to_mel(700.0), 781.18, 0.01);
  for (double f : {0.0, 123.0, 4000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
}

TEST(Mel, SingleFilterSpansTheWholeRange) {
  const auto fb = mel_filterbank(1024, 1, 16000, 0.0, 8000.0);
  ASSERT_EQ(fb.n_mels(), 1u);
  double peak = 0.0;
  for (std::size_t k = 0; k < fb.bins(); ++k) peak = std::max(peak, fb.weights(0, k));
  EXPECT_NEAR(peak, 1.0, 1e-12);
  const double bin_hz = 16000.0 / 1024.0;
  for (std::size_t k = 1; k + 1 < fb.bins(); ++k) {
    EXPECT_GT(fb.weights(0, k), 0.0) << "bin at " << k * bin_hz << " Hz";
  }
}

TEST(Mel, EveryInteriorBinIsCoveredAndRowsAreValid) {
  for (auto [n_mels, fmin, fmax] : {std::tuple{80u, 0.0, 8000.0}, std::tuple{40u, 100.0, 6000.0}}) {
    const auto fb = mel_filterbank(1024, n_mels, 16000, fmin, fmax);
    EXPECT_EQ(fb.bins(), 513u);
    const double bin_hz = 16000.0 / 1024.0;
    for (std::size_t k = 0; k < fb.bins(); ++k) {
      const double f = k * bin_hz;
      double col = 0.0;
      for (std::size_t m = 0; m < fb.n_mels(); ++m) col += fb.weights(m, k);
      if (f > fmin && f < fmax) {
        EXPECT_GT(col, 0.0) << "uncovered bin at " << f << " Hz";
      }
    }
    for (std::size_t m = 0; m < fb.n_mels(); ++m) {
      double row = 0.0;
      for (std::size_t k = 0; k < fb.bins(); ++k) {
        const double v = fb.weights(m, k);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        row += v;
      }
      EXPECT_GT(row, 0.0) << "empty filter " << m;
    }
  }
}

TEST(Mel, EnergyBoundedByFilterSums) {
  std::mt19937_64 rng(7);
  const Waveform w{gaussian(8000, rng), 16000};
  const auto s = stft(w, 1024, 256, {WindowType::hann, 1024});
  const auto fb = mel_filterbank(1024, 80, 16000, 0.0, 8000.0);
  const auto mel = apply_mel(fb, s.magnitudes);
  double max_col = 0.0;
  for (std::size_t k = 0; k < fb.bins(); ++k) {
    double col = 0.0;
    for (std::size_t m = 0; m < fb.n_mels(); ++m) col += fb.weights(m, k);
    max_col = std::max(max_col, col);
  }
  for (std::size_t f = 0; f < s.frames(); ++f) {
    double full = 0.0, banded = 0.0;
    for (std::size_t k = 0; k < s.bins(); ++k) full += s.magnitudes(k, f);
    for (std::size_t m = 0; m < fb.n_mels(); ++m) banded += mel(m, f);
    EXPECT_LE(banded, max_col * full * (1 + 1e-12));
  }
}

TEST(Mel, ParameterValidation) {
  EXPECT_THROW(mel_filterbank(1024, 0, 16000, 0.0, 8000.0), ParameterError);
  EXPECT_THROW(mel_filterbank(1024, 80, 16000, 0.0, 9000.0), ParameterError);
  EXPECT_THROW(mel_filterbank(1024, 80, 16000, 500.0, 400.0), ParameterError);
  const auto fb = mel_filterbank(1024, 80, 16000, 0.0, 8000.0);
  EXPECT_THROW(apply_mel(fb, FeatureMatrix(100, 3)), ShapeError);
}

// ------------------------------------------------------- spectral distance

TEST(SpectralDistance, IdentityAndNonDegeneracy) {
  std::mt19937_64 rng(8);
  const Waveform x{gaussian(4000, rng, 0.3), 16000};
  const Waveform silence{std::vector<double>(4000, 0.0), 16000};
  for (auto kind : {SpectralKind::mel, SpectralKind::stft}) {
    EXPECT_EQ(spectral_distance(x, x, kind), 0.0);
    EXPECT_GT(spectral_distance(silence, sine(440.0, 4000), kind), 0.0);
  }
}

TEST(SpectralDistance, SymmetricAndNonNegative) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Waveform a{gaussian(3000, rng, 0.2), 16000}, b{gaussian(3000, rng, 0.2), 16000};
    for (auto kind : {SpectralKind::mel, SpectralKind::stft}) {
      const double ab = spectral_distance(a, b, kind), ba = spectral_distance(b, a, kind);
      EXPECT_GT(ab, 0.0);
      EXPECT_EQ(ab, ba);
    }
  }
}

TEST(SpectralDistance, MatchesElementwiseOracleForDoubledSignal) {
  std::mt19937_64 rng(10);
  const Waveform a{gaussian(5000, rng, 0.3), 16000};
  Waveform b = a;
  for (double& v : b.samples) v *= 2.0;
  for (auto kind : {SpectralKind::mel, SpectralKind::stft}) {
    const auto fa = log_spectral_features(a, kind);
    const auto fb = log_spectral_features(b, kind);
    double acc = 0.0;
    for (std::size_t i = 0; i < fa.data.size(); ++i) acc += std::abs(fa.data[i] - fb.data[i]);
    acc /= static_cast<double>(fa.data.size());
    EXPECT_NEAR(spectral_distance(a, b, kind), acc, 1e-12);
    // Far above the floor every element differs by log 2.
    EXPECT_NEAR(acc, std::log(2.0), 0.02);
  }
}

TEST(SpectralDistance, RejectsMismatchedInputs) {
  const Waveform a{std::vector<double>(2000, 0.0), 16000};
  const Waveform b{std::vector<double>(2001, 0.0), 16000};
  const Waveform c{std::vector<double>(2000, 0.0), 8000};
  EXPECT_THROW(spectral_distance(a, b, SpectralKind::mel), ShapeError);
  EXPECT_THROW(spectral_distance(a, c, SpectralKind::mel), ShapeError);
}

}  // namespace
