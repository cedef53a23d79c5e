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
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xcodec/diff/ops.hpp"
#include "xcodec/diff/tensor.hpp"
#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"

namespace xcodec::rvq {

/// Layer counts drawn during training (quantizer dropout).
inline constexpr std::array<int, 5> kTrainingLayerOptions{1, 2, 3, 4, 8};

/// K codewords of dimension D plus the EMA statistics that learn them.
struct Codebook {
  std::size_t size = 0;
  std::size_t dim = 0;
  std::vector<double> entries;     // K x D
  std::vector<double> ema_counts;  // K
  std::vector<double> ema_sums;    // K x D

  Codebook() = default;
  Codebook(std::size_t k, std::size_t d)
      : size(k), dim(d), entries(k * d, 0.0), ema_counts(k, 0.0), ema_sums(k * d, 0.0) {}

  std::span<const double> entry(std::size_t i) const { return {entries.data() + i * dim, dim}; }
  std::span<double> entry(std::size_t i) { return {entries.data() + i * dim, dim}; }

  /// Lowest-index nearest codeword under squared Euclidean distance.
  std::uint32_t nearest(std::span<const double> v) const {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < size; ++k) {
      const double* e = entries.data() + k * dim;
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = v[j] - e[j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(k);
      }
    }
    return best;
  }
};

struct QuantizerState {
  std::vector<Codebook> layers;
  double decay = 0.99;
  double commitment_weight = 0.25;
  double dead_threshold = 1e-2;
  double epsilon = 1e-5;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;  // advances on each reinitialisation that fires
  bool initialized = false;

  static QuantizerState create(std::size_t codebook_size, std::size_t dim,
                               std::size_t max_layers = 8, std::uint64_t seed = 0) {
    if (codebook_size == 0 || dim == 0 || max_layers == 0) {
      throw ParameterError("QuantizerState: sizes must be positive");
    }
    QuantizerState s;
    s.layers.assign(max_layers, Codebook(codebook_size, dim));
    s.rng_seed = seed;
    return s;
  }

  std::size_t max_layers() const { return layers.size(); }
  std::size_t dim() const { return layers.empty() ? 0 : layers.front().dim; }
  std::size_t codebook_size() const { return layers.empty() ? 0 : layers.front().size; }

  void validate() const {
    if (!(decay > 0.0 && decay < 1.0)) throw ParameterError("rvq: decay must be in (0, 1)");
    for (const auto& l : layers) {
      if (l.dim != dim() || l.size != codebook_size()) {
        throw ShapeError("rvq: all layers must share codebook size and dimension");
      }
    }
  }
};

/// M x T codes, layer-major.
struct TokenMatrix {
  std::size_t layers = 0;
  std::size_t frames = 0;
  std::vector<std::uint32_t> codes;

  TokenMatrix() = default;
  TokenMatrix(std::size_t m, std::size_t t) : layers(m), frames(t), codes(m * t, 0) {}

  std::uint32_t& operator()(std::size_t l, std::size_t t) { return codes[l * frames + t]; }
  std::uint32_t operator()(std::size_t l, std::size_t t) const { return codes[l * frames + t]; }
  std::span<const std::uint32_t> row(std::size_t l) const {
    return {codes.data() + l * frames, frames};
  }

  TokenMatrix prefix(std::size_t m) const {
    if (m > layers) throw RangeError("TokenMatrix::prefix beyond available layers");
    TokenMatrix out(m, frames);
    std::copy_n(codes.begin(), m * frames, out.codes.begin());
    return out;
  }

  bool operator==(const TokenMatrix&) const = default;
};

struct QuantizeResult {
  FeatureMatrix quantized;                    // D x T, sum of selected codewords
  TokenMatrix tokens;                         // m_active x T
  std::vector<double> per_layer_residual_mse;  // after each active layer
  double commitment_loss = 0.0;
  std::vector<FeatureMatrix> layer_inputs;  // residual entering each layer
  FeatureMatrix final_residual;
};

inline void check_layers(const QuantizerState& state, int m) {
  if (m < 1 || static_cast<std::size_t>(m) > state.max_layers()) {
    throw ParameterError("rvq: layer count " + std::to_string(m) + " outside [1, " +
                         std::to_string(state.max_layers()) + "]");
  }
}

/// Residual quantisation of each frame (column) through the first m_active
/// layers. `training` only labels the call; gradient handling lives in
/// quantize_tensor.
inline QuantizeResult quantize(const QuantizerState& state, const FeatureMatrix& input,
                               int m_active, bool training = false) {
  (void)training;
  check_layers(state, m_active);
  const std::size_t d = state.dim();
  if (input.rows != d) {
    throw ShapeError("rvq: input has " + std::to_string(input.rows) + " rows, codebooks have D=" +
                     std::to_string(d));
  }
  const std::size_t t = input.cols;
  QuantizeResult res;
  res.quantized = FeatureMatrix(d, t);
  res.tokens = TokenMatrix(static_cast<std::size_t>(m_active), t);
  FeatureMatrix residual = input;
  std::vector<double> frame(d);
  for (int l = 0; l < m_active; ++l) {
    const Codebook& cb = state.layers[static_cast<std::size_t>(l)];
    res.layer_inputs.push_back(residual);
    double sq = 0.0;
    for (std::size_t f = 0; f < t; ++f) {
      for (std::size_t j = 0; j < d; ++j) frame[j] = residual(j, f);
      const std::uint32_t code = cb.nearest(frame);
      res.tokens(static_cast<std::size_t>(l), f) = code;
      const auto e = cb.entry(code);
      for (std::size_t j = 0; j < d; ++j) {
        residual(j, f) -= e[j];
        res.quantized(j, f) += e[j];
        sq += residual(j, f) * residual(j, f);
      }
    }
    res.per_layer_residual_mse.push_back(sq / static_cast<double>(d * t));
  }
  double commit = 0.0;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const double diff = input.data[i] - res.quantized.data[i];
    commit += diff * diff;
  }
  res.commitment_loss = state.commitment_weight * commit / static_cast<double>(input.data.size());
  res.final_residual = std::move(residual);
  return res;
}

/// Sum of the codewords selected by the first m token rows.
inline FeatureMatrix dequantize(const TokenMatrix& tokens, int m, const QuantizerState& state) {
  check_layers(state, m);
  if (static_cast<std::size_t>(m) > tokens.layers) {
    throw ParameterError("dequantize: m=" + std::to_string(m) + " exceeds token rows " +
                         std::to_string(tokens.layers));
  }
  const std::size_t d = state.dim();
  FeatureMatrix out(d, tokens.frames);
  for (int l = 0; l < m; ++l) {
    const Codebook& cb = state.layers[static_cast<std::size_t>(l)];
    for (std::size_t f = 0; f < tokens.frames; ++f) {
      const std::uint32_t code = tokens(static_cast<std::size_t>(l), f);
      if (code >= cb.size) {
        throw RangeError("dequantize: code " + std::to_string(code) + " at layer " +
                         std::to_string(l) + " frame " + std::to_string(f) + " >= K=" +
                         std::to_string(cb.size));
      }
      const auto e = cb.entry(code);
      for (std::size_t j = 0; j < d; ++j) out(j, f) += e[j];
    }
  }
  return out;
}

/// One exponential-moving-average step of a layer's codebook from the
/// residual frames it saw and the codes they were assigned.
inline void ema_update(QuantizerState& state, int layer, const FeatureMatrix& residual_in,
                       std::span<const std::uint32_t> tokens_row) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= state.max_layers()) {
    throw ParameterError("ema_update: layer " + std::to_string(layer) + " out of range");
  }
  Codebook& cb = state.layers[static_cast<std::size_t>(layer)];
  if (residual_in.rows != cb.dim || residual_in.cols != tokens_row.size()) {
    throw ShapeError("ema_update: residual/tokens shape mismatch");
  }
  const std::size_t k = cb.size, d = cb.dim;
  std::vector<double> counts(k, 0.0);
  std::vector<double> sums(k * d, 0.0);
  for (std::size_t f = 0; f < tokens_row.size(); ++f) {
    const std::uint32_t c = tokens_row[f];
    if (c >= k) throw RangeError("ema_update: code out of range");
    counts[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += residual_in(j, f);
  }
  const double lam = state.decay;
  for (std::size_t c = 0; c < k; ++c) {
    cb.ema_counts[c] = lam * cb.ema_counts[c] + (1.0 - lam) * counts[c];
    for (std::size_t j = 0; j < d; ++j) {
      cb.ema_sums[c * d + j] = lam * cb.ema_sums[c * d + j] + (1.0 - lam) * sums[c * d + j];
    }
    if (counts[c] > 0.0 || cb.ema_counts[c] > 0.0) {
      const double denom = std::max(cb.ema_counts[c], state.epsilon);
      for (std::size_t j = 0; j < d; ++j) cb.entries[c * d + j] = cb.ema_sums[c * d + j] / denom;
    }
  }
}

inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

/// Replaces codewords whose EMA count fell below the dead threshold with
/// frames drawn uniformly from `batch`. Returns how many were replaced.
inline int reinit_dead_codes(QuantizerState& state, int layer, const FeatureMatrix& batch) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= state.max_layers()) {
    throw ParameterError("reinit_dead_codes: layer " + std::to_string(layer) + " out of range");
  }
  if (batch.cols == 0) throw ParameterError("reinit_dead_codes: empty batch");
  Codebook& cb = state.layers[static_cast<std::size_t>(layer)];
  if (batch.rows != cb.dim) throw ShapeError("reinit_dead_codes: batch dimension mismatch");
  const bool any_dead = std::any_of(cb.ema_counts.begin(), cb.ema_counts.end(),
                                    [&](double c) { return c < state.dead_threshold; });
  if (!any_dead) return 0;
  auto rng = derive_rng(state.rng_seed, state.rng_counter++);
  std::uniform_int_distribution<std::size_t> pick(0, batch.cols - 1);
  int replaced = 0;
  for (std::size_t c = 0; c < cb.size; ++c) {
    if (cb.ema_counts[c] >= state.dead_threshold) continue;
    const std::size_t f = pick(rng);
    for (std::size_t j = 0; j < cb.dim; ++j) {
      cb.entries[c * cb.dim + j] = batch(j, f);
      cb.ema_sums[c * cb.dim + j] = batch(j, f);
    }
    cb.ema_counts[c] = 1.0;
    ++replaced;
  }
  return replaced;
}

/// Seeds every layer's codebook from frames of the first batch, layer by
/// layer on the residual left by the already-seeded layers. Frames are taken
/// without replacement while they last.
inline void initialize_from_frames(QuantizerState& state, const FeatureMatrix& frames) {
  if (frames.cols == 0) throw ParameterError("rvq init: no frames");
  if (frames.rows != state.dim()) throw ShapeError("rvq init: frame dimension mismatch");
  auto rng = derive_rng(state.rng_seed, std::numeric_limits<std::uint64_t>::max());
  FeatureMatrix residual = frames;
  std::vector<std::size_t> order(frames.cols);
  std::vector<double> v(state.dim());
  for (auto& cb : state.layers) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t c = 0; c < cb.size; ++c) {
      const std::size_t f = order[c % order.size()];
      for (std::size_t j = 0; j < cb.dim; ++j) {
        cb.entries[c * cb.dim + j] = residual(j, f);
        cb.ema_sums[c * cb.dim + j] = residual(j, f);
      }
      cb.ema_counts[c] = 1.0;
    }
    for (std::size_t f = 0; f < residual.cols; ++f) {
      for (std::size_t j = 0; j < cb.dim; ++j) v[j] = residual(j, f);
      const auto e = cb.entry(cb.nearest(v));
      for (std::size_t j = 0; j < cb.dim; ++j) residual(j, f) -= e[j];
    }
  }
  state.initialized = true;
}

/// Uniform draw from the training layer-count options.
inline int sample_active_layers(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kTrainingLayerOptions.size() - 1);
  return kTrainingLayerOptions[pick(rng)];
}

/// exp(entropy) of the empirical code distribution; 1 = collapse, K = uniform.
inline double codebook_perplexity(std::span<const std::uint32_t> tokens_row, std::size_t k) {
  if (tokens_row.empty()) throw ParameterError("codebook_perplexity: empty token sequence");
  std::vector<double> counts(k, 0.0);
  for (auto c : tokens_row) {
    if (c >= k) throw RangeError("codebook_perplexity: code out of range");
    counts[c] += 1.0;
  }
  const double n = static_cast<double>(tokens_row.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return std::exp(h);
}

/// Quantisation wired into the autodiff graph.
struct QuantizedTensor {
  diff::Tensor quantized;   // U_q
  diff::Tensor commitment;  // weighted commitment loss, scalar
  QuantizeResult result;
};

/// In training mode the quantized output passes gradients straight through
/// to the input; in eval mode it is a constant. The commitment term pulls the
/// input toward its (detached) quantisation.
inline QuantizedTensor quantize_tensor(const QuantizerState& state, const diff::Tensor& input,
                                       int m_active, bool training) {
  if (input.rank() != 2) throw ShapeError("quantize_tensor: input must be D x T");
  FeatureMatrix in(input.dim(0), input.dim(1),
                   std::vector<double>(input.values().begin(), input.values().end()));
  QuantizedTensor out;
  out.result = quantize(state, in, m_active, training);
  const diff::Tensor target = diff::Tensor::constant(input.shape(), out.result.quantized.data);
  out.quantized = training ? diff::straight_through(input, out.result.quantized.data) : target;
  out.commitment = diff::scale(diff::mse(input, target), state.commitment_weight);
  return out;
}

}  // namespace xcodec::rvq
