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

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "xcodec/error.hpp"

namespace xcodec::codec {

/// Architecture and quantizer constants. Defaults are the full-size model;
/// desk() and tiny() are reduced variants that keep the 320x hop.
struct CodecConfig {
  int sample_rate = 16000;
  std::vector<int> downsample_rates{2, 4, 5, 8};
  std::size_t acoustic_hidden = 256;   // H_a
  std::size_t semantic_dim = 768;      // H_s, width of S* and of the reconstruction
  std::size_t semantic_hidden = 768;   // conv width inside the semantic encoder/decoder
  std::size_t fused_dim = 512;         // H_u
  std::size_t codebook_size = 1024;    // K
  std::size_t max_layers = 8;          // M
  std::size_t base_channels = 16;      // width of the first acoustic conv; doubles per block
  std::size_t kernel_size = 7;
  double commitment_weight = 0.25;
  double ema_decay = 0.99;
  double dead_threshold = 1e-2;
  bool semantic_enabled = true;
  std::uint64_t seed = 0;

  int hop() const {
    return std::accumulate(downsample_rates.begin(), downsample_rates.end(), 1,
                           std::multiplies<>());
  }
  double frame_rate() const { return static_cast<double>(sample_rate) / hop(); }
  std::size_t frames_for(std::size_t n) const {
    const auto h = static_cast<std::size_t>(hop());
    return (n + h - 1) / h;
  }
  std::size_t top_channels() const { return base_channels << downsample_rates.size(); }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("codec: sample_rate must be positive");
    if (downsample_rates.empty()) throw ConfigError("codec: downsample_rates is empty");
    for (int r : downsample_rates) {
      if (r < 1) throw ConfigError("codec: downsample rates must be >= 1");
    }
    if (hop() != 320) {
      throw ConfigError("codec: downsample rates must multiply to 320, got " +
                        std::to_string(hop()));
    }
    if (fused_dim == 0 || fused_dim % 2 != 0) throw ConfigError("codec: fused_dim must be even");
    if (acoustic_hidden == 0 || semantic_dim == 0 || semantic_hidden == 0 ||
        base_channels == 0) {
      throw ConfigError("codec: widths must be positive");
    }
    if (codebook_size < 1 || codebook_size > 65535) {
      throw ConfigError("codec: codebook_size must be in [1, 65535]");
    }
    if (max_layers < 1) throw ConfigError("codec: max_layers must be >= 1");
    if (kernel_size % 2 == 0) throw ConfigError("codec: kernel_size must be odd");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("codec: ema_decay in (0,1)");
  }

  /// Desk-scale model used by the bundled training runs.
  static CodecConfig desk() {
    CodecConfig c;
    c.acoustic_hidden = 32;
    c.semantic_dim = 32;
    c.semantic_hidden = 32;
    c.fused_dim = 32;
    c.codebook_size = 64;
    c.base_channels = 4;
    return c;
  }

  /// Smallest configuration, sized for full finite-difference checks.
  static CodecConfig tiny() {
    CodecConfig c;
    c.acoustic_hidden = 8;
    c.semantic_dim = 12;
    c.semantic_hidden = 12;
    c.fused_dim = 8;
    c.codebook_size = 16;
    c.base_channels = 1;
    c.kernel_size = 3;
    return c;
  }
};

}  // namespace xcodec::codec
