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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xcodec/codec/config.hpp"
#include "xcodec/codec/layers.hpp"
#include "xcodec/diff/ops.hpp"
#include "xcodec/diff/tensor.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/rvq/quantizer.hpp"
#include "xcodec/semantic/features.hpp"

namespace xcodec::codec {

enum class Mode { train, eval };

struct ForwardOptions {
  // Replace the quantizer by the identity (gradient checks only).
  bool bypass_quantizer = false;
};

/// Everything one pass through the X-shaped model produces.
struct ForwardOutput {
  diff::Tensor x_hat;                 // 1 x n
  std::optional<diff::Tensor> s_hat;  // H_s x T, absent for the baseline
  rvq::TokenMatrix tokens;            // m x T
  diff::Tensor acoustic;              // A, H_a x T
  std::optional<diff::Tensor> semantic;  // S, semantic_hidden x T
  diff::Tensor fused;                 // U, H_u x T
  diff::Tensor quantized;             // U_q, H_u x T
  diff::Tensor commitment;            // weighted commitment loss
  rvq::QuantizeResult quantize_result;
  int active_layers = 0;
};

struct EncoderBlock {
  ResidualUnit res;
  Conv down;
};

struct DecoderBlock {
  ConvTranspose up;
  ResidualUnit res;
};

/// Acoustic encoder/decoder, semantic encoder/decoder, fusion projections and
/// the shared residual quantizer. Parameters are shared handles, so the model
/// is move-only.
class CodecModel {
 public:
  explicit CodecModel(CodecConfig config) : config_(std::move(config)) {
    config_.validate();
    ParameterFactory pf(params_, config_.seed);
    const std::size_t k = config_.kernel_size;
    const std::size_t half = config_.fused_dim / 2;

    std::size_t ch = config_.base_channels;
    acoustic_in_ = Conv::make(pf, "acoustic.encoder.conv_in", 1, ch, k, 1, k / 2);
    for (std::size_t b = 0; b < config_.downsample_rates.size(); ++b) {
      const auto s = static_cast<std::size_t>(config_.downsample_rates[b]);
      const std::string name = "acoustic.encoder.block" + std::to_string(b);
      EncoderBlock blk{ResidualUnit::make(pf, name + ".res", ch, k),
                       Conv::make(pf, name + ".down", ch, 2 * ch, s + 2 * (s / 2), s, s / 2)};
      encoder_blocks_.push_back(std::move(blk));
      ch *= 2;
    }
    acoustic_out_ = Conv::make(pf, "acoustic.encoder.conv_out", ch, config_.acoustic_hidden, 3, 1, 1);

    if (config_.semantic_enabled) {
      const std::size_t hs = config_.semantic_dim, sh = config_.semantic_hidden;
      semantic_in_ = Conv::make(pf, "semantic.encoder.conv_in", hs, sh, 3, 1, 1);
      for (int i = 0; i < 2; ++i) {
        semantic_enc_.push_back(
            ResidualUnit::make(pf, "semantic.encoder.block" + std::to_string(i), sh, k));
      }
      phi_s_ = Linear::make(pf, "phi_s", sh, half);
      phi_a_ = Linear::make(pf, "phi_a", config_.acoustic_hidden, half);
      beta_s_ = Linear::make(pf, "beta_s", config_.fused_dim, sh);
      for (int i = 0; i < 2; ++i) {
        semantic_dec_.push_back(
            ResidualUnit::make(pf, "semantic.decoder.block" + std::to_string(i), sh, k));
      }
      semantic_out_ = Conv::make(pf, "semantic.decoder.conv_out", sh, hs, 3, 1, 1);
    } else {
      phi_a_ = Linear::make(pf, "phi_a", config_.acoustic_hidden, config_.fused_dim);
    }
    beta_a_ = Linear::make(pf, "beta_a", config_.fused_dim, config_.acoustic_hidden);

    decoder_in_ = Conv::make(pf, "acoustic.decoder.conv_in", config_.acoustic_hidden, ch, k, 1, k / 2);
    for (std::size_t b = 0; b < config_.downsample_rates.size(); ++b) {
      const auto s = static_cast<std::size_t>(
          config_.downsample_rates[config_.downsample_rates.size() - 1 - b]);
      const std::string name = "acoustic.decoder.block" + std::to_string(b);
      DecoderBlock blk{
          ConvTranspose::make(pf, name + ".up", ch, ch / 2, s + 2 * (s / 2), s, s / 2),
          ResidualUnit::make(pf, name + ".res", ch / 2, k)};
      decoder_blocks_.push_back(std::move(blk));
      ch /= 2;
    }
    decoder_out_ = Conv::make(pf, "acoustic.decoder.conv_out", ch, 1, k, 1, k / 2);

    quantizer_ = rvq::QuantizerState::create(config_.codebook_size, config_.fused_dim,
                                             config_.max_layers, config_.seed ^ 0x9E3779B97F4A7C15ULL);
    quantizer_.decay = config_.ema_decay;
    quantizer_.commitment_weight = config_.commitment_weight;
    quantizer_.dead_threshold = config_.dead_threshold;
  }

  CodecModel(CodecModel&&) = default;
  CodecModel& operator=(CodecModel&&) = default;
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  const CodecConfig& config() const { return config_; }
  std::span<diff::Parameter> parameters() { return params_; }
  std::span<const diff::Parameter> parameters() const { return params_; }
  rvq::QuantizerState& quantizer() { return quantizer_; }
  const rvq::QuantizerState& quantizer() const { return quantizer_; }

  diff::Parameter* find_parameter(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  /// Samples of zero padding added before the waveform so the padded length
  /// is a whole number of hops; the decoder trims the same amount.
  std::size_t left_padding(std::size_t n) const {
    const std::size_t total = config_.frames_for(n) * static_cast<std::size_t>(config_.hop());
    return (total - n) / 2;
  }

  diff::Tensor waveform_tensor(const dsp::Waveform& x) const {
    if (x.sample_rate != config_.sample_rate) {
      throw ConfigError("codec: waveform at " + std::to_string(x.sample_rate) +
                        " Hz, model expects " + std::to_string(config_.sample_rate));
    }
    return diff::Tensor::constant({1, x.samples.size()}, x.samples);
  }

  /// A = acoustic_encoder(x), H_a x ceil(n/320).
  diff::Tensor encode_acoustic(const diff::Tensor& x) const {
    if (x.rank() != 2 || x.dim(0) != 1) throw ShapeError("encode_acoustic: expects 1 x n");
    const std::size_t n = x.dim(1);
    if (n < static_cast<std::size_t>(config_.hop())) {
      throw ShapeError("encode_acoustic: need at least one hop (" +
                       std::to_string(config_.hop()) + " samples), got " + std::to_string(n));
    }
    const std::size_t total = config_.frames_for(n) * static_cast<std::size_t>(config_.hop());
    const std::size_t left = left_padding(n);
    diff::Tensor h = acoustic_in_(diff::pad_time(x, left, total - n - left));
    for (const auto& blk : encoder_blocks_) h = blk.down(diff::elu(blk.res(h)));
    return acoustic_out_(diff::elu(h));
  }
  diff::Tensor encode_acoustic(const dsp::Waveform& x) const {
    return encode_acoustic(waveform_tensor(x));
  }

  /// S = semantic_encoder(S*), semantic_hidden x T.
  diff::Tensor encode_semantic(const diff::Tensor& s_star) const {
    require_semantic("encode_semantic");
    if (s_star.rank() != 2 || s_star.dim(0) != config_.semantic_dim) {
      throw ShapeError("encode_semantic: expects " + std::to_string(config_.semantic_dim) +
                       " x T, got " + diff::shape_str(s_star.shape()));
    }
    diff::Tensor h = semantic_in_(s_star);
    for (const auto& r : semantic_enc_) h = r(h);
    return h;
  }

  /// U = concat(phi_s(S), phi_a(A)); the baseline has U = phi_a(A).
  diff::Tensor fuse(const std::optional<diff::Tensor>& s, const diff::Tensor& a) const {
    if (!config_.semantic_enabled) return phi_a_(a);
    if (!s) throw ShapeError("fuse: semantic stream required");
    if (s->dim(1) != a.dim(1)) {
      throw ShapeError("fuse: semantic has " + std::to_string(s->dim(1)) +
                       " frames, acoustic has " + std::to_string(a.dim(1)));
    }
    return diff::concat_channels(phi_s_(*s), phi_a_(a));
  }

  /// S_hat* = semantic_decoder(beta_s(U_q)), H_s x T.
  diff::Tensor decode_semantic(const diff::Tensor& u_q) const {
    require_semantic("decode_semantic");
    check_fused(u_q, "decode_semantic");
    diff::Tensor h = beta_s_(u_q);
    for (const auto& r : semantic_dec_) h = r(h);
    return semantic_out_(h);
  }

  /// x_hat = tanh(acoustic_decoder(beta_a(U_q))), centre-trimmed to n samples.
  diff::Tensor decode_acoustic(const diff::Tensor& u_q, std::size_t n) const {
    check_fused(u_q, "decode_acoustic");
    const std::size_t t = u_q.dim(1);
    if (n == 0 || config_.frames_for(n) != t) {
      throw ShapeError("decode_acoustic: " + std::to_string(n) + " samples inconsistent with " +
                       std::to_string(t) + " frames");
    }
    diff::Tensor h = decoder_in_(beta_a_(u_q));
    for (const auto& blk : decoder_blocks_) h = blk.res(blk.up(diff::elu(h)));
    h = diff::tanh(decoder_out_(diff::elu(h)));
    return diff::crop_time(h, left_padding(n), n);
  }

  /// Full pass: encoders, fusion, quantizer (straight-through in train mode),
  /// both decoders.
  ForwardOutput forward(const dsp::Waveform& x, const semantic::SemanticFeatures* s_star,
                        Mode mode, int m, const ForwardOptions& opt = {}) const {
    return forward(waveform_tensor(x), s_star ? &s_star->features : nullptr, mode, m, opt);
  }

  ForwardOutput forward(const diff::Tensor& x, const FeatureMatrix* s_star, Mode mode, int m,
                        const ForwardOptions& opt = {}) const {
    ForwardOutput out;
    out.active_layers = m;
    out.acoustic = encode_acoustic(x);
    const std::size_t t = out.acoustic.dim(1);
    if (config_.semantic_enabled) {
      if (!s_star) throw ShapeError("forward: semantic features required for this model");
      if (s_star->cols != t) {
        throw ShapeError("forward: semantic features have " + std::to_string(s_star->cols) +
                         " frames, audio has " + std::to_string(t));
      }
      out.semantic = encode_semantic(diff::Tensor::constant({s_star->rows, s_star->cols}, s_star->data));
    }
    out.fused = fuse(out.semantic, out.acoustic);
    if (opt.bypass_quantizer) {
      out.quantized = out.fused;
      out.commitment = diff::Tensor::scalar(0.0);
    } else {
      auto q = rvq::quantize_tensor(quantizer_, out.fused, m, mode == Mode::train);
      out.quantized = q.quantized;
      out.commitment = q.commitment;
      out.tokens = q.result.tokens;
      out.quantize_result = std::move(q.result);
    }
    if (config_.semantic_enabled) out.s_hat = decode_semantic(out.quantized);
    out.x_hat = decode_acoustic(out.quantized, x.dim(1));
    return out;
  }

  /// Eval-mode tokens for the first m layers.
  rvq::TokenMatrix encode_tokens(const dsp::Waveform& x, const semantic::SemanticFeatures* s_star,
                                 int m) const {
    diff::NoGradGuard guard;
    return forward_latent(x, s_star, m).tokens;
  }

  /// Continuous latent at a tap: U (pre-VQ) or U_q at m layers.
  struct Latent {
    FeatureMatrix fused;
    FeatureMatrix quantized;
    rvq::TokenMatrix tokens;
  };
  Latent forward_latent(const dsp::Waveform& x, const semantic::SemanticFeatures* s_star,
                        int m) const {
    diff::NoGradGuard guard;
    rvq::check_layers(quantizer_, m);
    const diff::Tensor a = encode_acoustic(x);
    std::optional<diff::Tensor> s;
    if (config_.semantic_enabled) {
      if (!s_star) throw ShapeError("semantic features required for this model");
      if (s_star->frames() != a.dim(1)) throw ShapeError("semantic/acoustic frame mismatch");
      s = encode_semantic(diff::Tensor::constant({s_star->dim(), s_star->frames()},
                                                 s_star->features.data));
    }
    const diff::Tensor u = fuse(s, a);
    Latent out;
    out.fused = FeatureMatrix(u.dim(0), u.dim(1), {u.values().begin(), u.values().end()});
    auto q = rvq::quantize(quantizer_, out.fused, m, false);
    out.quantized = std::move(q.quantized);
    out.tokens = std::move(q.tokens);
    return out;
  }

  /// Dequantise then run the acoustic decoder; output has n samples.
  dsp::Waveform decode_tokens(const rvq::TokenMatrix& q, std::size_t n) const {
    diff::NoGradGuard guard;
    const FeatureMatrix u = rvq::dequantize(q, static_cast<int>(q.layers), quantizer_);
    const auto x = decode_acoustic(diff::Tensor::constant({u.rows, u.cols}, u.data), n);
    return {{x.values().begin(), x.values().end()}, config_.sample_rate};
  }

 private:
  void require_semantic(const char* op) const {
    if (!config_.semantic_enabled) {
      throw StateError(std::string(op) + ": semantic branch is disabled (baseline model)");
    }
  }
  void check_fused(const diff::Tensor& u, const char* op) const {
    if (u.rank() != 2 || u.dim(0) != config_.fused_dim) {
      throw ShapeError(std::string(op) + ": expects " + std::to_string(config_.fused_dim) +
                       " x T, got " + diff::shape_str(u.shape()));
    }
  }

  CodecConfig config_;
  std::vector<diff::Parameter> params_;

  Conv acoustic_in_;
  std::vector<EncoderBlock> encoder_blocks_;
  Conv acoustic_out_;

  Conv semantic_in_;
  std::vector<ResidualUnit> semantic_enc_;
  Linear phi_s_;
  Linear phi_a_;
  Linear beta_s_;
  Linear beta_a_;
  std::vector<ResidualUnit> semantic_dec_;
  Conv semantic_out_;

  Conv decoder_in_;
  std::vector<DecoderBlock> decoder_blocks_;
  Conv decoder_out_;

  rvq::QuantizerState quantizer_;
};

}  // namespace xcodec::codec
