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
#include <cstring>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "xcodec/binary_io.hpp"
#include "xcodec/semantic/features.hpp"
#include "xcodec/synth/corpus.hpp"

namespace {

using namespace xcodec;
using namespace xcodec::semantic;
using xcodec::testing::gaussian;

SemanticFeatures random_features(std::size_t hs, std::size_t t, std::mt19937_64& rng) {
  SemanticFeatures f;
  f.features = FeatureMatrix(hs, t, gaussian(hs * t, rng));
  for (double& v : f.features.data) v = static_cast<float>(v);
  return f;
}

// ------------------------------------------------------------ feature files

TEST(FeatureFile, ZerosRoundTrip) {
  SemanticFeatures f;
  f.features = FeatureMatrix(768, 10);
  const auto bytes = encode_features(f);
  EXPECT_EQ(bytes.size(), 20u + 4u * 768u * 10u);
  const auto back = decode_features(bytes, "zeros");
  EXPECT_EQ(back.dim(), 768u);
  EXPECT_EQ(back.frames(), 10u);
  for (double v : back.features.data) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(back.frame_rate, 50.0);
}

TEST(FeatureFile, RoundTripIsBitExactAtF32) {
  std::mt19937_64 rng(1);
  const auto dir = xcodec::testing::scratch_dir();
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_features(1 + rng() % 40, 1 + rng() % 30, rng);
    write_features(f, dir / "f.sfea");
    const auto back = load_features(dir / "f.sfea");
    EXPECT_EQ(back.features, f.features);
    EXPECT_EQ(encode_features(back), io::read_file(dir / "f.sfea"));
  }
}

TEST(FeatureFile, TruncationNamesByteCounts) {
  std::mt19937_64 rng(2);
  const auto bytes = encode_features(random_features(4, 3, rng));
  try {
    decode_features({bytes.begin(), bytes.end() - 4}, "short.sfea");
    FAIL() << "expected TruncationError";
  } catch (const TruncationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("short.sfea"), std::string::npos) << msg;
    EXPECT_NE(msg.find("44"), std::string::npos) << msg;
    EXPECT_NE(msg.find("48"), std::string::npos) << msg;
  }
}

TEST(FeatureFile, MalformedInputs) {
  std::mt19937_64 rng(3);
  const auto bytes = encode_features(random_features(2, 2, rng));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_features(bad, "m"), FormatError);
  auto version = bytes;
  version[4] = 7;
  EXPECT_THROW(decode_features(version, "m"), FormatError);
  auto nan = bytes;
  const float q = std::nanf("");
  std::memcpy(nan.data() + 20, &q, 4);
  EXPECT_THROW(decode_features(nan, "m"), DataError);
  EXPECT_THROW(decode_features({bytes.begin(), bytes.begin() + 10}, "m"), TruncationError);
}

// ----------------------------------------------------------------- surrogate

TEST(Surrogate, FrameArithmetic) {
  for (auto [n, t] : {std::pair{320u, 1u}, std::pair{321u, 2u}, std::pair{16000u, 50u}}) {
    const dsp::Waveform w{std::vector<double>(n, 0.0), 16000};
    EXPECT_EQ(surrogate_extractor(w, 16).frames(), t) << "n=" << n;
  }
}

TEST(Surrogate, SilenceGivesConstantFrames) {
  const dsp::Waveform w{std::vector<double>(3200, 0.0), 16000};
  const auto f = surrogate_extractor(w, 24);
  EXPECT_EQ(f.source, FeatureSource::surrogate);
  for (std::size_t t = 1; t < f.frames(); ++t) {
    for (std::size_t h = 0; h < f.dim(); ++h) EXPECT_NEAR(f.features(h, t), f.features(h, 0), 1e-12);
  }
  // The constant is the projected log floor.
  const auto p = detail::surrogate_projection(24, 80, kSurrogateSeed);
  for (std::size_t h = 0; h < 24; ++h) {
    double expected = 0.0;
    for (std::size_t m = 0; m < 80; ++m) expected += p(h, m) * std::log(1e-5);
    EXPECT_NEAR(f.features(h, 0), expected, 1e-9);
  }
}

TEST(Surrogate, ProjectionIsOrthonormal) {
  for (std::size_t hs : {16u, 80u, 128u}) {
    const auto p = detail::surrogate_projection(hs, 80, kSurrogateSeed);
    const bool rows = hs <= 80;
    const std::size_t count = rows ? hs : 80, len = rows ? 80 : hs;
    for (std::size_t a = 0; a < count; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += rows ? p(a, i) * p(b, i) : p(i, a) * p(i, b);
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
      }
    }
  }
}

TEST(Surrogate, Deterministic) {
  std::mt19937_64 rng(4);
  const dsp::Waveform w{gaussian(5000, rng, 0.2), 16000};
  EXPECT_EQ(surrogate_extractor(w, 32).features, surrogate_extractor(w, 32).features);
}

TEST(Surrogate, SeparatesSpectralEnvelopes) {
  const auto contexts = synth::make_contexts(4, 0);
  const auto& cats = synth::categories();
  std::mt19937_64 rng(5);
  // Two categories, rendered in every context; even repeats train the
  // centroids, odd repeats are held out.
  std::vector<std::vector<std::vector<double>>> train(2), test(2);
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& ctx : contexts) {
      for (int rep = 0; rep < 4; ++rep) {
        dsp::Waveform w{synth::detail::render_phoneme(cats[c], ctx, 3200, 16000, rng), 16000};
        const auto f = surrogate_extractor(w, 32);
        for (std::size_t t = 2; t + 2 < f.frames(); ++t) (rep % 2 ? test : train)[c].push_back(f.features.frame(t));
      }
    }
  }
  std::vector<std::vector<double>> centroid(2, std::vector<double>(32, 0.0));
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& v : train[c]) {
      for (std::size_t j = 0; j < 32; ++j) centroid[c][j] += v[j] / train[c].size();
    }
  }
  std::size_t right = 0, total = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& v : test[c]) {
      double d[2] = {0, 0};
      for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t j = 0; j < 32; ++j) d[k] += std::pow(v[j] - centroid[k][j], 2);
      }
      right += (d[c] < d[1 - c]);
      ++total;
    }
  }
  EXPECT_GT(static_cast<double>(right) / total, 0.95) << right << "/" << total;
}

TEST(Surrogate, Validation) {
  const dsp::Waveform w{std::vector<double>(3200, 0.0), 8000};
  EXPECT_THROW(surrogate_extractor(w, 16), ParameterError);
  const dsp::Waveform ok{std::vector<double>(3200, 0.0), 16000};
  EXPECT_THROW(surrogate_extractor(ok, 0), ParameterError);
}

// ----------------------------------------------------------------- alignment

TEST(Align, IdentityWhenCountsMatch) {
  std::mt19937_64 rng(6);
  const auto f = random_features(5, 9, rng);
  EXPECT_EQ(align_frames(f, 9).features, f.features);
}

TEST(Align, SmallMismatchTruncatesOrRepeats) {
  std::mt19937_64 rng(7);
  const auto f = random_features(3, 10, rng);
  const auto shorter = align_frames(f, 9);
  ASSERT_EQ(shorter.frames(), 9u);
  for (std::size_t t = 0; t < 9; ++t) EXPECT_EQ(shorter.features.frame(t), f.features.frame(t));
  const auto longer = align_frames(f, 12);
  ASSERT_EQ(longer.frames(), 12u);
  EXPECT_EQ(longer.features.frame(10), f.features.frame(9));
  EXPECT_EQ(longer.features.frame(11), f.features.frame(9));
}

TEST(Align, HalvingAveragesPairsOfLinearFrames) {
  SemanticFeatures f;
  f.features = FeatureMatrix(2, 12);
  for (std::size_t t = 0; t < 12; ++t) {
    f.features(0, t) = 3.0 * t - 1.0;
    f.features(1, t) = -0.5 * t;
  }
  const auto half = align_frames(f, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t h = 0; h < 2; ++h) {
      EXPECT_NEAR(half.features(h, j), 0.5 * (f.features(h, 2 * j) + f.features(h, 2 * j + 1)), 1e-12);
    }
  }
}

TEST(Align, PreservesChannelsAndFiniteness) {
  std::mt19937_64 rng(8);
  const auto f = random_features(7, 13, rng);
  for (long target : {1L, 4L, 30L, 100L}) {
    const auto a = align_frames(f, target);
    EXPECT_EQ(a.dim(), 7u);
    EXPECT_EQ(a.frames(), static_cast<std::size_t>(target));
    for (double v : a.features.data) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(align_frames(f, 0), ParameterError);
}

// -------------------------------------------------------- synthetic corpus

TEST(SynthCorpus, ShapesAndCoverage) {
  synth::CorpusConfig cfg;
  cfg.train_clips = 8;
  const auto c = synth::generate(cfg);
  ASSERT_EQ(c.train.size(), 8u);
  EXPECT_EQ(c.abx.size(), cfg.abx_repeats * cfg.n_categories * cfg.n_contexts);
  for (const auto& clip : c.train) {
    EXPECT_EQ(clip.wave.samples.size(), cfg.phonemes_per_clip * cfg.phoneme_samples);
    EXPECT_EQ(clip.features.frames(), (clip.wave.samples.size() + 319) / 320);
    EXPECT_EQ(clip.features.dim(), cfg.feature_dim);
    for (double v : clip.wave.samples) {
      EXPECT_LE(std::abs(v), 1.0);
      EXPECT_EQ(v, dsp::to_pcm16(v) / dsp::kPcmScale);
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& item : c.abx) {
    ASSERT_EQ(item.phonemes.size(), 1u);
    pairs.insert({item.phonemes[0], item.context});
  }
  EXPECT_EQ(pairs.size(), cfg.n_categories * cfg.n_contexts);
}

TEST(SynthCorpus, DeterministicInSeed) {
  synth::CorpusConfig cfg;
  cfg.train_clips = 3;
  const auto a = synth::generate(cfg), b = synth::generate(cfg);
  EXPECT_EQ(a.train[2].wave.samples, b.train[2].wave.samples);
  EXPECT_EQ(a.abx[5].features.features, b.abx[5].features.features);
  cfg.seed = 1;
  EXPECT_NE(synth::generate(cfg).train[2].wave.samples, a.train[2].wave.samples);
}

TEST(SynthCorpus, ContentFeaturesFollowPhonemes) {
  synth::CorpusConfig cfg;
  cfg.train_clips = 1;
  cfg.feature_noise = 0.0;
  const auto c = synth::generate(cfg);
  const auto emb = synth::category_embeddings(cfg.n_categories, cfg.feature_dim, cfg.seed);
  // 3200 samples per phoneme = 10 frames each, no straddling frames.
  const auto& clip = c.train[0];
  for (std::size_t t = 0; t < clip.features.frames(); ++t) {
    const std::size_t p = clip.phonemes[t / 10];
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
      EXPECT_EQ(clip.features.features(j, t), static_cast<float>(emb(p, j)));
    }
  }
}

TEST(SynthCorpus, WrittenCorpusReloads) {
  synth::CorpusConfig cfg;
  cfg.train_clips = 2;
  cfg.abx_repeats = 1;
  cfg.n_contexts = 2;
  cfg.n_categories = 2;
  const auto c = synth::generate(cfg);
  const auto dir = xcodec::testing::scratch_dir();
  synth::write_corpus(c, dir);
  const auto w = dsp::load_wav(dir / "train" / "clip_0001.wav");
  EXPECT_EQ(w.samples, c.train[1].wave.samples);
  EXPECT_EQ(load_features(dir / "abx" / "item_0003.sfea").features, c.abx[3].features.features);
  EXPECT_TRUE(std::filesystem::exists(dir / "abx" / "manifest.txt"));
}

}  // namespace
