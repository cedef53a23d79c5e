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

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "xcodec/codec/model.hpp"
#include "xcodec/dsp/spectral.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/rvq/quantizer.hpp"
#include "xcodec/semantic/features.hpp"

namespace xcodec::eval {

enum class Tap { pre_vq, post_vq };

/// Continuous representation at a tap: U before quantisation, or U_q using
/// the first m layers.
inline FeatureMatrix representation_dump(const codec::CodecModel& model, const dsp::Waveform& x,
                                         const semantic::SemanticFeatures* s_star, Tap tap,
                                         int m = 8) {
  if (tap == Tap::post_vq &&
      (m < 1 || static_cast<std::size_t>(m) > model.config().max_layers)) {
    throw ParameterError("representation_dump: post_vq tap needs m in [1, " +
                         std::to_string(model.config().max_layers) + "], got " + std::to_string(m));
  }
  auto latent = model.forward_latent(x, s_star, tap == Tap::post_vq ? m : 1);
  return tap == Tap::pre_vq ? std::move(latent.fused) : std::move(latent.quantized);
}

inline Tap parse_tap(const std::string& s, int& m) {
  if (s == "pre_vq") return Tap::pre_vq;
  const std::string pre = "post_vq_";
  if (s.rfind(pre, 0) == 0) {
    try {
      std::size_t used = 0;
      m = std::stoi(s.substr(pre.size()), &used);
      if (used == s.size() - pre.size()) return Tap::post_vq;
    } catch (const std::exception&) {
    }
  }
  throw ParameterError("unknown tap '" + s + "' (expected pre_vq or post_vq_<m>)");
}

/// A clip to encode and decode, with its semantic features when the model
/// needs them.
struct EvalClip {
  std::string name;
  dsp::Waveform wave;
  std::optional<semantic::SemanticFeatures> features;
};

struct ReconRow {
  int m = 0;
  double mel_distance = 0.0;   // mean over clips
  double stft_distance = 0.0;  // mean over clips
  std::vector<double> perplexity;  // per active layer, over all clip tokens
  std::vector<double> mel_per_clip;
  std::vector<double> stft_per_clip;
};

/// decode(encode(x)) for one clip at m layers.
inline dsp::Waveform reconstruct(const codec::CodecModel& model, const EvalClip& clip, int m) {
  const auto tokens = model.encode_tokens(clip.wave, clip.features ? &*clip.features : nullptr, m);
  return model.decode_tokens(tokens, clip.wave.samples.size());
}

inline std::vector<ReconRow> reconstruction_report(const codec::CodecModel& model,
                                                   const std::vector<EvalClip>& clips,
                                                   const std::vector<int>& m_list,
                                                   const dsp::SpectralConfig& cfg = {}) {
  if (m_list.empty()) throw ParameterError("reconstruction_report: m_list is empty");
  if (clips.empty()) throw ParameterError("reconstruction_report: no clips");
  const std::size_t k = model.config().codebook_size;
  std::vector<ReconRow> rows;
  for (int m : m_list) {
    rvq::check_layers(model.quantizer(), m);
    ReconRow row;
    row.m = m;
    std::vector<std::vector<std::uint32_t>> codes(static_cast<std::size_t>(m));
    for (const auto& c : clips) {
      const auto* feats = c.features ? &*c.features : nullptr;
      const auto tokens = model.encode_tokens(c.wave, feats, m);
      for (int l = 0; l < m; ++l) {
        const auto r = tokens.row(static_cast<std::size_t>(l));
        codes[static_cast<std::size_t>(l)].insert(codes[static_cast<std::size_t>(l)].end(), r.begin(), r.end());
      }
      const auto y = model.decode_tokens(tokens, c.wave.samples.size());
      row.mel_per_clip.push_back(dsp::spectral_distance(c.wave, y, dsp::SpectralKind::mel, cfg));
      row.stft_per_clip.push_back(dsp::spectral_distance(c.wave, y, dsp::SpectralKind::stft, cfg));
    }
    for (std::size_t i = 0; i < clips.size(); ++i) {
      row.mel_distance += row.mel_per_clip[i] / static_cast<double>(clips.size());
      row.stft_distance += row.stft_per_clip[i] / static_cast<double>(clips.size());
    }
    for (const auto& c : codes) row.perplexity.push_back(rvq::codebook_perplexity(c, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Aligned table followed by one `m=<m> mel=<v> stft=<v> ppl=[...]` line per row.
inline std::string format_recon_report(const std::vector<ReconRow>& rows) {
  std::string out = "     m   mel_dist  stft_dist\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6d %10.4f %10.4f\n", r.m, r.mel_distance, r.stft_distance);
    out += buf;
  }
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "m=%d mel=%.6g stft=%.6g ppl=[", r.m, r.mel_distance, r.stft_distance);
    out += buf;
    for (std::size_t l = 0; l < r.perplexity.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%s%.4g", l ? "," : "", r.perplexity[l]);
      out += buf;
    }
    out += "]\n";
  }
  return out;
}

}  // namespace xcodec::eval
