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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xcodec/diff/ops.hpp"
#include "xcodec/diff/tensor.hpp"
#include "xcodec/dsp/fft.hpp"
#include "xcodec/dsp/mel.hpp"
#include "xcodec/dsp/spectral.hpp"
#include "xcodec/dsp/stft.hpp"
#include "xcodec/error.hpp"

namespace xcodec::codec {

/// Differentiable log-magnitude L1 distance between a predicted waveform
/// tensor and a fixed reference, numerically the same quantity as
/// dsp::spectral_distance. Window and filterbank are built once.
class SpectralLoss {
 public:
  explicit SpectralLoss(int sample_rate, dsp::SpectralConfig cfg = {})
      : impl_(std::make_shared<const Impl>(Impl{
            cfg, dsp::make_window(cfg.window()),
            dsp::mel_filterbank(cfg.n_fft, cfg.n_mels, sample_rate, cfg.f_min,
                                cfg.resolved_f_max(sample_rate))})) {}

  const dsp::SpectralConfig& config() const { return impl_->cfg; }

  /// log(floor + magnitude) of the reference, bins-or-mels x frames.
  FeatureMatrix reference_features(const dsp::Waveform& ref, dsp::SpectralKind kind) const {
    const auto& cfg = impl_->cfg;
    const auto& window = impl_->window;
    const auto& mel = impl_->mel;
    dsp::check_stft_params(ref.samples.size(), cfg.n_fft, cfg.hop, cfg.window());
    FeatureMatrix mags = magnitudes(dsp::stft_complex(ref.samples, cfg.n_fft, cfg.hop, window));
    if (kind == dsp::SpectralKind::mel) mags = dsp::apply_mel(mel, mags);
    for (double& v : mags.data) v = std::log(cfg.log_floor + v);
    return mags;
  }

  /// `predicted` is 1 x n.
  diff::Tensor operator()(const diff::Tensor& predicted, const FeatureMatrix& reference,
                          dsp::SpectralKind kind) const {
    if (predicted.rank() != 2 || predicted.dim(0) != 1) {
      throw ShapeError("spectral loss: prediction must be 1 x n");
    }
    const std::size_t n = predicted.dim(1);
    const auto& cfg = impl_->cfg;
    const auto& window = impl_->window;
    const auto& mel = impl_->mel;
    dsp::check_stft_params(n, cfg.n_fft, cfg.hop, cfg.window());
    auto spec = dsp::stft_complex(predicted.values(), cfg.n_fft, cfg.hop, window);
    const FeatureMatrix mags = magnitudes(spec);
    FeatureMatrix feats = kind == dsp::SpectralKind::mel ? dsp::apply_mel(mel, mags) : mags;
    if (feats.rows != reference.rows || feats.cols != reference.cols) {
      throw ShapeError("spectral loss: reference shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < feats.data.size(); ++i) {
      acc += std::abs(std::log(cfg.log_floor + feats.data[i]) - reference.data[i]);
    }
    const double inv = 1.0 / static_cast<double>(feats.data.size());

    return diff::make_op_result(
        std::string("spectral_l1_") + dsp::to_string(kind), {}, {acc * inv}, {predicted},
        [impl = impl_, kind, inv, n, spec = std::move(spec), feats = std::move(feats),
         reference](diff::Node& self) {
          const auto& cfg = impl->cfg;
          const auto& window = impl->window;
          const auto& mel = impl->mel;
          const double g0 = self.grad[0] * inv;
          // d loss / d feature
          FeatureMatrix gf(feats.rows, feats.cols);
          for (std::size_t i = 0; i < feats.data.size(); ++i) {
            const double diff = std::log(cfg.log_floor + feats.data[i]) - reference.data[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            gf.data[i] = g0 * sgn / (cfg.log_floor + feats.data[i]);
          }
          // d loss / d |X_k|
          FeatureMatrix gm(cfg.n_fft / 2 + 1, gf.cols);
          if (kind == dsp::SpectralKind::mel) {
            for (std::size_t m = 0; m < mel.n_mels(); ++m) {
              for (std::size_t k = 0; k < mel.bins(); ++k) {
                const double w = mel.weights(m, k);
                if (w == 0.0) continue;
                for (std::size_t f = 0; f < gf.cols; ++f) gm(k, f) += w * gf(m, f);
              }
            }
          } else {
            gm = gf;
          }
          diff::Node& xn = *self.inputs[0];
          xn.ensure_grad();
          const long len = static_cast<long>(n);
          const long pad = static_cast<long>(cfg.n_fft / 2);
          std::vector<std::complex<double>> z(cfg.n_fft);
          for (std::size_t f = 0; f < gm.cols; ++f) {
            std::fill(z.begin(), z.end(), std::complex<double>{});
            for (std::size_t k = 0; k < gm.rows; ++k) {
              const double mag = std::abs(spec[f][k]);
              if (mag > 0.0) z[k] = gm(k, f) * spec[f][k] / mag;
            }
            // Re(sum_k Y_k e^{+2 pi i k j / N}) over the one-sided bins.
            dsp::fft_inplace(z, /*inverse=*/true);
            const long start = static_cast<long>(f * cfg.hop) - pad;
            for (std::size_t j = 0; j < cfg.n_fft; ++j) {
              xn.grad[dsp::reflect_index(start + static_cast<long>(j), len)] +=
                  window[j] * z[j].real();
            }
          }
        });
  }

 private:
  static FeatureMatrix magnitudes(const std::vector<std::vector<std::complex<double>>>& spec) {
    FeatureMatrix m(spec.empty() ? 0 : spec.front().size(), spec.size());
    for (std::size_t f = 0; f < spec.size(); ++f) {
      for (std::size_t k = 0; k < spec[f].size(); ++k) m(k, f) = std::abs(spec[f][k]);
    }
    return m;
  }

  struct Impl {
    dsp::SpectralConfig cfg;
    std::vector<double> window;
    dsp::MelFilterbank mel;
  };
  // Shared with pending backward closures so graphs may outlive this object.
  std::shared_ptr<const Impl> impl_;
};

/// Per-term loss values and the weighted total.
struct LossReport {
  double mel_loss = 0.0;
  double stft_loss = 0.0;
  std::optional<double> semantic_mse;  // absent for the acoustic-only baseline
  double commitment = 0.0;
  double total = 0.0;
  double gamma = 0.0;
};

/// Graph handles for each loss term of one forward pass.
struct LossTerms {
  diff::Tensor mel;
  diff::Tensor stft;
  diff::Tensor commitment;
  std::optional<diff::Tensor> semantic;

  diff::Tensor total(double gamma) const {
    diff::Tensor t = diff::add(diff::add(mel, stft), commitment);
    if (semantic) t = diff::add(t, diff::scale(*semantic, gamma));
    return t;
  }

  LossReport report(double gamma) const {
    LossReport r;
    r.mel_loss = mel.item();
    r.stft_loss = stft.item();
    r.commitment = commitment.item();
    if (semantic) r.semantic_mse = semantic->item();
    r.gamma = gamma;
    r.total = r.mel_loss + r.stft_loss + r.commitment +
              (r.semantic_mse ? gamma * *r.semantic_mse : 0.0);
    return r;
  }
};

}  // namespace xcodec::codec
