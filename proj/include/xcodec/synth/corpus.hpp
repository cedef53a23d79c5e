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
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"
#include "xcodec/rvq/quantizer.hpp"
#include "xcodec/semantic/features.hpp"

namespace xcodec::synth {

/// Vowel-like categories defined by their first three formants (Hz).
struct Category {
  std::string label;
  std::array<double, 3> formants;
};

inline const std::vector<Category>& categories() {
  static const std::vector<Category> kCategories{
      {"a", {730.0, 1090.0, 2440.0}}, {"i", {270.0, 2290.0, 3010.0}},
      {"u", {300.0, 870.0, 2240.0}},  {"e", {530.0, 1840.0, 2480.0}},
      {"o", {570.0, 840.0, 2410.0}},  {"ae", {660.0, 1720.0, 2410.0}},
  };
  return kCategories;
}

/// A synthetic speaker: pitch, spectral tilt and vocal-tract scaling.
struct Context {
  double f0 = 120.0;
  double tilt_db_per_octave = -6.0;
  double formant_scale = 1.0;
};

struct CorpusConfig {
  std::size_t n_categories = 6;
  std::size_t n_contexts = 4;
  std::size_t train_clips = 60;
  std::size_t phonemes_per_clip = 5;
  std::size_t phoneme_samples = 3200;  // 0.2 s
  std::size_t abx_repeats = 4;         // items per (category, context)
  std::size_t feature_dim = 32;        // H_s of the emitted content features
  double feature_noise = 0.1;
  int sample_rate = 16000;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_categories < 2 || n_categories > categories().size()) {
      throw ParameterError("synth: n_categories must be in [2, " +
                           std::to_string(categories().size()) + "]");
    }
    if (n_contexts < 2) throw ParameterError("synth: need at least two contexts");
    if (phoneme_samples == 0 || phoneme_samples % 320 != 0) {
      throw ParameterError("synth: phoneme_samples must be a positive multiple of 320");
    }
    if (feature_dim == 0 || phonemes_per_clip == 0) throw ParameterError("synth: sizes must be positive");
    if (sample_rate != 16000) throw ParameterError("synth: only 16000 Hz is supported");
  }
};

/// One generated clip with its frame-level content features and labels.
struct SynthClip {
  std::string name;
  dsp::Waveform wave;
  semantic::SemanticFeatures features;
  std::vector<std::size_t> phonemes;  // category id per phoneme
  std::size_t context = 0;
};

struct SynthCorpus {
  std::vector<Context> contexts;
  std::vector<SynthClip> train;
  std::vector<SynthClip> abx;  // single-phoneme items
};

namespace detail {

inline double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / bandwidth;
  return 1.0 / (1.0 + x * x);
}

// Harmonic source shaped by the formant envelope and the speaker tilt, plus
// noise concentrated around the formants.
inline std::vector<double> render_phoneme(const Category& cat, const Context& ctx,
                                          std::size_t n, int sr, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 0.02);
  const double f0 = ctx.f0 * (1.0 + jitter(rng));
  const double nyquist = 0.5 * sr;
  auto envelope = [&](double f) {
    double e = 0.0;
    for (std::size_t i = 0; i < cat.formants.size(); ++i) {
      const double fc = cat.formants[i] * ctx.formant_scale;
      e += (i == 2 ? 0.3 : 1.0) * resonance(f, fc, 60.0 + 0.06 * fc);
    }
    return e * std::pow(10.0, ctx.tilt_db_per_octave * std::log2(std::max(f, 50.0) / 100.0) / 20.0);
  };
  std::vector<double> out(n, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (double f = f0; f < nyquist - 200.0; f += f0) {
    const double a = envelope(f);
    if (a < 1e-4) continue;
    const double ph = phase(rng);
    for (std::size_t t = 0; t < n; ++t) out[t] += a * std::sin(two_pi * f * t / sr + ph);
  }
  std::normal_distribution<double> spread(0.0, 1.0);
  for (int j = 0; j < 24; ++j) {
    const auto& fc = cat.formants[static_cast<std::size_t>(j) % 2];
    const double f = std::clamp(fc * ctx.formant_scale + 80.0 * spread(rng), 50.0, nyquist - 50.0);
    const double a = 0.05 * envelope(f);
    const double ph = phase(rng);
    for (std::size_t t = 0; t < n; ++t) out[t] += a * std::sin(two_pi * f * t / sr + ph);
  }
  // 10 ms raised-cosine fades keep phoneme joins click-free.
  const std::size_t fade = std::min<std::size_t>(n / 2, static_cast<std::size_t>(sr / 100));
  for (std::size_t t = 0; t < fade; ++t) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(t) / fade);
    out[t] *= g;
    out[n - 1 - t] *= g;
  }
  return out;
}

inline void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

}  // namespace detail

/// Fixed unit-norm content embedding per category.
inline FeatureMatrix category_embeddings(std::size_t n_categories, std::size_t dim,
                                         std::uint64_t seed) {
  auto rng = rvq::derive_rng(seed, 0xE3BEDull);
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureMatrix e(n_categories, dim);
  for (std::size_t c = 0; c < n_categories; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) norm += (e(c, j) = g(rng)) * e(c, j);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) e(c, j) /= norm;
  }
  return e;
}

/// Frame-level content features at 50 Hz: each frame is the overlap-weighted
/// mix of the embeddings of the phonemes it covers, plus seeded noise. These
/// stand in for self-supervised speech features: they carry phonetic identity
/// and nothing about the speaker.
inline semantic::SemanticFeatures content_features(const std::vector<std::size_t>& phonemes,
                                                   std::size_t phoneme_samples,
                                                   const FeatureMatrix& embeddings, double noise,
                                                   std::mt19937_64& rng) {
  const std::size_t n = phonemes.size() * phoneme_samples;
  const std::size_t hop = semantic::kSurrogateHop;
  const std::size_t t_count = (n + hop - 1) / hop;
  std::normal_distribution<double> g(0.0, noise);
  semantic::SemanticFeatures f;
  f.frame_rate = 16000.0 / static_cast<double>(hop);
  f.source = semantic::FeatureSource::file;
  f.features = FeatureMatrix(embeddings.cols, t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t lo = t * hop, hi = std::min(n, lo + hop);
    for (std::size_t s = lo; s < hi;) {
      const std::size_t p = s / phoneme_samples;
      const std::size_t end = std::min(hi, (p + 1) * phoneme_samples);
      const double w = static_cast<double>(end - s) / static_cast<double>(hi - lo);
      for (std::size_t j = 0; j < embeddings.cols; ++j) f.features(j, t) += w * embeddings(phonemes[p], j);
      s = end;
    }
    for (std::size_t j = 0; j < embeddings.cols; ++j) f.features(j, t) += g(rng);
  }
  // Match the f32 precision of the feature file.
  for (double& v : f.features.data) v = static_cast<float>(v);
  return f;
}

inline std::vector<Context> make_contexts(std::size_t n, std::uint64_t seed) {
  auto rng = rvq::derive_rng(seed, 0xC0471ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Context> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
    out[i].f0 = 95.0 + 130.0 * pos + 10.0 * (u(rng) - 0.5);
    out[i].tilt_db_per_octave = -3.0 - 6.0 * u(rng);
    out[i].formant_scale = 0.9 + 0.2 * pos;
  }
  return out;
}

/// Deterministic in (config, seed): training clips of several phonemes from
/// one speaker each, and single-phoneme ABX items covering every
/// (category, context) pair.
inline SynthCorpus generate(const CorpusConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.contexts = make_contexts(cfg.n_contexts, cfg.seed);
  const FeatureMatrix emb = category_embeddings(cfg.n_categories, cfg.feature_dim, cfg.seed);
  const auto& cats = categories();

  auto make_clip = [&](std::string name, std::vector<std::size_t> phonemes, std::size_t ctx,
                       std::mt19937_64& rng) {
    SynthClip clip;
    clip.name = std::move(name);
    clip.context = ctx;
    clip.wave.sample_rate = cfg.sample_rate;
    for (std::size_t p : phonemes) {
      auto seg = detail::render_phoneme(cats[p], corpus.contexts[ctx], cfg.phoneme_samples,
                                        cfg.sample_rate, rng);
      clip.wave.samples.insert(clip.wave.samples.end(), seg.begin(), seg.end());
    }
    detail::normalize_peak(clip.wave.samples, 0.5);
    // Store exactly what a 16-bit WAV would hold.
    for (double& v : clip.wave.samples) v = dsp::to_pcm16(v) / dsp::kPcmScale;
    clip.features = content_features(phonemes, cfg.phoneme_samples, emb, cfg.feature_noise, rng);
    clip.phonemes = std::move(phonemes);
    return clip;
  };

  auto rng = rvq::derive_rng(cfg.seed, 1);
  std::uniform_int_distribution<std::size_t> pick_cat(0, cfg.n_categories - 1);
  for (std::size_t i = 0; i < cfg.train_clips; ++i) {
    std::vector<std::size_t> ph(cfg.phonemes_per_clip);
    for (auto& p : ph) p = pick_cat(rng);
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04zu", i);
    corpus.train.push_back(make_clip(name, std::move(ph), i % cfg.n_contexts, rng));
  }
  auto abx_rng = rvq::derive_rng(cfg.seed, 2);
  std::size_t k = 0;
  for (std::size_t ctx = 0; ctx < cfg.n_contexts; ++ctx) {
    for (std::size_t c = 0; c < cfg.n_categories; ++c) {
      for (std::size_t r = 0; r < cfg.abx_repeats; ++r) {
        char name[32];
        std::snprintf(name, sizeof name, "item_%04zu", k++);
        corpus.abx.push_back(make_clip(name, {c}, ctx, abx_rng));
      }
    }
  }
  return corpus;
}

/// Writes train/<clip>.wav + .sfea, abx/<item>.wav + .sfea and
/// abx/manifest.txt ("<wav path> <category> <context>", relative paths).
inline void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "abx");
  for (const auto& c : corpus.train) {
    dsp::save_wav(c.wave, dir / "train" / (c.name + ".wav"));
    semantic::write_features(c.features, dir / "train" / (c.name + ".sfea"));
  }
  std::string manifest;
  for (const auto& c : corpus.abx) {
    dsp::save_wav(c.wave, dir / "abx" / (c.name + ".wav"));
    semantic::write_features(c.features, dir / "abx" / (c.name + ".sfea"));
    manifest += c.name + ".wav " + categories()[c.phonemes.front()].label + " ctx" +
                std::to_string(c.context) + "\n";
  }
  io::write_file_atomic(dir / "abx" / "manifest.txt", {manifest.begin(), manifest.end()});
}

}  // namespace xcodec::synth
