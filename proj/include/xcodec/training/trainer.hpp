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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xcodec/codec/losses.hpp"
#include "xcodec/codec/model.hpp"
#include "xcodec/diff/adam.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/rvq/quantizer.hpp"
#include "xcodec/semantic/features.hpp"
#include "xcodec/training/checkpoint.hpp"

namespace xcodec::training {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  std::size_t segment_samples = 3200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t dead_code_every = 100;
  std::optional<double> gamma;  // unset: calibrate on the first step

  void validate() const {
    if (steps == 0) throw ConfigError("train: steps must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (segment_samples == 0 || segment_samples % 320 != 0) {
      throw ConfigError("train: segment_samples must be a positive multiple of 320");
    }
    if (segment_samples <= 512) throw ConfigError("train: segment_samples must exceed n_fft/2");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (gamma && !(*gamma >= 0.0)) throw ConfigError("train: gamma must be non-negative");
  }
};

/// One training clip; features are present for the X-Codec corpus.
struct Clip {
  std::string name;
  dsp::Waveform wave;
  std::optional<semantic::SemanticFeatures> features;
};

struct Corpus {
  std::vector<Clip> clips;
};

/// A cropped training example with its precomputed spectral targets.
struct Segment {
  dsp::Waveform wave;
  std::optional<FeatureMatrix> features;
  FeatureMatrix mel_ref;
  FeatureMatrix stft_ref;
};

/// Mel, STFT and a shared window/filterbank, built once per run.
struct LossContext {
  codec::SpectralLoss spectral;
  explicit LossContext(int sample_rate) : spectral(sample_rate) {}
};

/// Loss graph for one example. The semantic term exists only when the model
/// has a semantic branch.
inline codec::LossTerms loss_terms(const codec::ForwardOutput& out, const Segment& seg,
                                   const LossContext& ctx) {
  codec::LossTerms t;
  auto guarded = [](const char* term, auto&& fn) {
    try {
      return fn();
    } catch (const NumericError& e) {
      throw NumericError(std::string("non-finite ") + term + " loss: " + e.what());
    }
  };
  t.mel = guarded("mel", [&] { return ctx.spectral(out.x_hat, seg.mel_ref, dsp::SpectralKind::mel); });
  t.stft = guarded("stft", [&] { return ctx.spectral(out.x_hat, seg.stft_ref, dsp::SpectralKind::stft); });
  t.commitment = out.commitment;
  if (out.s_hat) {
    if (!seg.features) throw ShapeError("loss: semantic reconstruction without a target");
    const auto& f = *seg.features;
    t.semantic = guarded("semantic", [&] {
      return diff::mse(*out.s_hat, diff::Tensor::constant({f.rows, f.cols}, f.data));
    });
  }
  for (const auto* term : {&t.mel, &t.stft, &t.commitment}) {
    if (!std::isfinite(term->item())) throw NumericError("non-finite loss term");
  }
  return t;
}

/// LossReport for a forward output against its targets.
inline codec::LossReport total_loss(const codec::ForwardOutput& out, const Segment& seg,
                                    const LossContext& ctx, double gamma) {
  return loss_terms(out, seg, ctx).report(gamma);
}

inline Segment make_segment(dsp::Waveform wave, std::optional<FeatureMatrix> features,
                            const LossContext& ctx) {
  Segment s;
  s.mel_ref = ctx.spectral.reference_features(wave, dsp::SpectralKind::mel);
  s.stft_ref = ctx.spectral.reference_features(wave, dsp::SpectralKind::stft);
  s.wave = std::move(wave);
  s.features = std::move(features);
  return s;
}

/// Checks clip lengths and aligns feature frame counts to ceil(n/320).
inline void prepare_corpus(Corpus& corpus, TrainMode mode, const TrainConfig& cfg) {
  if (corpus.clips.empty()) throw DatasetError("corpus is empty");
  for (auto& c : corpus.clips) {
    if (c.wave.sample_rate != 16000) {
      throw DatasetError(c.name + ": sample rate " + std::to_string(c.wave.sample_rate) +
                         ", expected 16000");
    }
    if (c.wave.samples.size() < cfg.segment_samples) {
      throw DatasetError(c.name + ": " + std::to_string(c.wave.samples.size()) +
                         " samples, shorter than the training segment");
    }
    if (mode == TrainMode::xcodec) {
      if (!c.features) throw DatasetError(c.name + ": missing semantic features");
      const auto t = static_cast<long>((c.wave.samples.size() + 319) / 320);
      c.features = semantic::align_frames(*c.features, t);
    } else {
      c.features.reset();
    }
  }
}

/// Seeded batch: clip chosen uniformly, crop start uniform on the hop grid.
inline std::vector<Segment> sample_batch(const Corpus& corpus, const TrainConfig& cfg,
                                         std::uint64_t step, const LossContext& ctx) {
  auto rng = rvq::derive_rng(cfg.seed, 2 * step);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.clips.size() - 1);
  const std::size_t seg_frames = cfg.segment_samples / 320;
  std::vector<Segment> out;
  out.reserve(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const Clip& c = corpus.clips[pick(rng)];
    const std::size_t frames = c.wave.samples.size() / 320;
    std::uniform_int_distribution<std::size_t> start(0, frames - seg_frames);
    const std::size_t f0 = start(rng);
    dsp::Waveform w;
    w.sample_rate = c.wave.sample_rate;
    w.samples.assign(c.wave.samples.begin() + static_cast<long>(f0 * 320),
                     c.wave.samples.begin() + static_cast<long>((f0 + seg_frames) * 320));
    std::optional<FeatureMatrix> feats;
    if (c.features) {
      const auto& src = c.features->features;
      FeatureMatrix f(src.rows, seg_frames);
      for (std::size_t h = 0; h < src.rows; ++h) {
        for (std::size_t t = 0; t < seg_frames; ++t) f(h, t) = src(h, f0 + t);
      }
      feats = std::move(f);
    }
    out.push_back(make_segment(std::move(w), std::move(feats), ctx));
  }
  return out;
}

struct StepResult {
  codec::LossReport report;  // batch mean
  int active_layers = 0;
  std::vector<std::optional<double>> perplexity;  // per layer, absent when inactive
};

namespace detail {

inline FeatureMatrix concat_frames(const std::vector<const FeatureMatrix*>& parts) {
  std::size_t cols = 0;
  for (const auto* p : parts) cols += p->cols;
  FeatureMatrix out(parts.front()->rows, cols);
  std::size_t off = 0;
  for (const auto* p : parts) {
    for (std::size_t r = 0; r < p->rows; ++r) {
      for (std::size_t c = 0; c < p->cols; ++c) out(r, off + c) = (*p)(r, c);
    }
    off += p->cols;
  }
  return out;
}

inline FeatureMatrix fused_frames(const codec::CodecModel& model, const Segment& seg) {
  diff::NoGradGuard guard;
  const auto a = model.encode_acoustic(seg.wave);
  std::optional<diff::Tensor> s;
  if (model.config().semantic_enabled) {
    s = model.encode_semantic(diff::Tensor::constant({seg.features->rows, seg.features->cols},
                                                     seg.features->data));
  }
  const auto u = model.fuse(s, a);
  return {u.dim(0), u.dim(1), {u.values().begin(), u.values().end()}};
}

}  // namespace detail

/// One optimisation step: sample m, forward every segment, backpropagate the
/// batch-mean total, Adam, EMA on the active layers and periodic dead-code
/// reinitialisation. Advances state.step.
inline StepResult train_step(TrainingState& state, const std::vector<Segment>& batch,
                             const TrainConfig& cfg, const LossContext& ctx) {
  if (batch.empty()) throw ParameterError("train_step: empty batch");
  for (const auto& s : batch) {
    if (s.wave.samples.size() != batch.front().wave.samples.size()) {
      throw ShapeError("train_step: batch segments must have equal length");
    }
  }
  auto& model = state.model;
  auto& q = model.quantizer();
  auto rng = rvq::derive_rng(cfg.seed, 2 * state.step + 1);
  const int m = rvq::sample_active_layers(rng);

  if (!q.initialized) {
    std::vector<FeatureMatrix> u;
    for (const auto& s : batch) u.push_back(detail::fused_frames(model, s));
    std::vector<const FeatureMatrix*> parts;
    for (const auto& x : u) parts.push_back(&x);
    rvq::initialize_from_frames(q, detail::concat_frames(parts));
  }

  std::vector<codec::ForwardOutput> outs;
  std::vector<codec::LossTerms> terms;
  for (const auto& s : batch) {
    codec::ForwardOutput out;
    try {
      out = model.forward(model.waveform_tensor(s.wave), s.features ? &*s.features : nullptr,
                          codec::Mode::train, m);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(state.step) + ": forward pass: " + e.what());
    }
    try {
      terms.push_back(loss_terms(out, s, ctx));
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(state.step) + ": " + e.what());
    }
    outs.push_back(std::move(out));
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  if (!state.gamma) {
    if (model.config().semantic_enabled) {
      double mel = 0.0, sem = 0.0;
      for (const auto& t : terms) {
        mel += t.mel.item();
        sem += t.semantic->item();
      }
      // Align the weighted semantic term with the mel term, then freeze.
      state.gamma = sem > 0.0 ? mel / sem : 1.0;
    } else {
      state.gamma = 0.0;
    }
  }
  const double gamma = *state.gamma;

  diff::Tensor total = terms.front().total(gamma);
  for (std::size_t i = 1; i < terms.size(); ++i) total = diff::add(total, terms[i].total(gamma));
  total = diff::scale(total, inv_b);
  total.backward();
  state.optimizer.lr = cfg.lr;
  diff::adam_step(model.parameters(), state.optimizer);

  StepResult res;
  res.active_layers = m;
  res.perplexity.assign(q.max_layers(), std::nullopt);
  const bool reinit = cfg.dead_code_every > 0 && (state.step + 1) % cfg.dead_code_every == 0;
  for (int l = 0; l < m; ++l) {
    std::vector<const FeatureMatrix*> parts;
    std::vector<std::uint32_t> codes;
    for (const auto& o : outs) {
      parts.push_back(&o.quantize_result.layer_inputs[static_cast<std::size_t>(l)]);
      const auto row = o.tokens.row(static_cast<std::size_t>(l));
      codes.insert(codes.end(), row.begin(), row.end());
    }
    const FeatureMatrix inputs = detail::concat_frames(parts);
    res.perplexity[static_cast<std::size_t>(l)] = rvq::codebook_perplexity(codes, q.codebook_size());
    rvq::ema_update(q, l, inputs, codes);
    if (reinit) rvq::reinit_dead_codes(q, l, inputs);
  }

  codec::LossReport& r = res.report;
  r.gamma = gamma;
  double sem = 0.0;
  for (const auto& t : terms) {
    const auto one = t.report(gamma);
    r.mel_loss += one.mel_loss * inv_b;
    r.stft_loss += one.stft_loss * inv_b;
    r.commitment += one.commitment * inv_b;
    if (one.semantic_mse) sem += *one.semantic_mse * inv_b;
  }
  if (model.config().semantic_enabled) r.semantic_mse = sem;
  r.total = r.mel_loss + r.stft_loss + r.commitment + (r.semantic_mse ? gamma * *r.semantic_mse : 0.0);
  ++state.step;
  return res;
}

/// `step=<k> mel=<v> stft=<v> sem=<v|na> commit=<v> total=<v> ppl=[...]`
inline std::string format_log_line(std::uint64_t step, const StepResult& r) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  std::string line = "step=" + std::to_string(step) + " mel=" + num(r.report.mel_loss) +
                     " stft=" + num(r.report.stft_loss) +
                     " sem=" + (r.report.semantic_mse ? num(*r.report.semantic_mse) : "na") +
                     " commit=" + num(r.report.commitment) + " total=" + num(r.report.total) +
                     " ppl=[";
  for (std::size_t l = 0; l < r.perplexity.size(); ++l) {
    if (l) line += ",";
    line += r.perplexity[l] ? num(*r.perplexity[l]) : "na";
  }
  return line + "]";
}

/// Fresh state for a run: model seeded from the training seed, semantic
/// branch set by the mode.
inline TrainingState initial_state(codec::CodecConfig model_config, TrainMode mode,
                                   const TrainConfig& cfg) {
  model_config.semantic_enabled = mode == TrainMode::xcodec;
  model_config.seed = cfg.seed;
  TrainingState s{codec::CodecModel(std::move(model_config)), {}, 0, cfg.gamma};
  s.optimizer.lr = cfg.lr;
  return s;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_%08llu.sckp", static_cast<unsigned long long>(step));
  return dir / buf;
}

// Receives each log line with the full-precision step result.
using LogSink = std::function<void(const std::string&, const StepResult&)>;

/// Runs until state.step == cfg.steps, appending one log line per step to
/// out_dir/train.log (and to `sink`), writing periodic checkpoints and
/// out_dir/final.sckp. Returns the final checkpoint path.
inline std::filesystem::path train_loop(TrainingState& state, Corpus corpus, const TrainConfig& cfg,
                                        const std::filesystem::path& out_dir,
                                        const LogSink& sink = {}) {
  cfg.validate();
  prepare_corpus(corpus, state.mode(), cfg);
  std::filesystem::create_directories(out_dir);
  const LossContext ctx(state.model.config().sample_rate);
  std::ofstream log(out_dir / "train.log", state.step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + (out_dir / "train.log").string());
  while (state.step < cfg.steps) {
    const std::uint64_t k = state.step;
    const auto batch = sample_batch(corpus, cfg, k, ctx);
    const StepResult r = train_step(state, batch, cfg, ctx);
    const std::string line = format_log_line(k, r);
    log << line << '\n';
    if (sink) sink(line, r);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.steps) {
      log.flush();
      save_checkpoint(state, checkpoint_path(out_dir, state.step));
    }
  }
  log.flush();
  const auto final_path = out_dir / "final.sckp";
  save_checkpoint(state, final_path);
  return final_path;
}

/// Loads every *.wav in `dir` (sorted by name); the matching .sfea is
/// required in X-Codec mode and ignored otherwise.
inline Corpus load_corpus_dir(const std::filesystem::path& dir, TrainMode mode) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DatasetError("corpus directory not found: " + dir.string());
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw DatasetError("no .wav files in " + dir.string());
  Corpus c;
  for (const auto& w : wavs) {
    Clip clip;
    clip.name = w.stem().string();
    clip.wave = dsp::load_wav(w);
    if (mode == TrainMode::xcodec) {
      auto feat = w;
      feat.replace_extension(".sfea");
      if (!fs::exists(feat)) {
        throw DatasetError("missing feature file for clip '" + clip.name + "': " + feat.string());
      }
      clip.features = semantic::load_features(feat);
    }
    c.clips.push_back(std::move(clip));
  }
  return c;
}

}  // namespace xcodec::training
