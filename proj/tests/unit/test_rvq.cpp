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

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "xcodec/diff/ops.hpp"
#include "xcodec/rvq/quantizer.hpp"

namespace {

using namespace xcodec;
using namespace xcodec::rvq;
using xcodec::testing::gaussian;

FeatureMatrix random_matrix(std::size_t d, std::size_t t, std::mt19937_64& rng, double sd = 1.0) {
  return FeatureMatrix(d, t, gaussian(d * t, rng, sd));
}

// Quantizer seeded from data and refined with EMA, the way training leaves it.
QuantizerState trained_state(std::size_t k, std::size_t d, std::size_t m, std::uint64_t seed) {
  auto state = QuantizerState::create(k, d, m, seed);
  std::mt19937_64 rng(seed);
  initialize_from_frames(state, random_matrix(d, 64, rng));
  for (int it = 0; it < 50; ++it) {
    const auto x = random_matrix(d, 32, rng);
    const auto r = quantize(state, x, static_cast<int>(m), true);
    for (std::size_t l = 0; l < m; ++l) ema_update(state, static_cast<int>(l), r.layer_inputs[l], r.tokens.row(l));
  }
  return state;
}

// ------------------------------------------------------------------ quantize

TEST(Quantize, ExactCodewordIsReproduced) {
  std::mt19937_64 rng(1);
  auto state = QuantizerState::create(8, 4, 2, 0);
  for (auto& v : state.layers[0].entries) v = gaussian(1, rng)[0];
  FeatureMatrix x(4, 3);
  const std::array<std::uint32_t, 3> codes{5, 0, 5};
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t j = 0; j < 4; ++j) x(j, f) = state.layers[0].entry(codes[f])[j];
  }
  const auto r = quantize(state, x, 1);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(r.tokens(0, f), codes[f]);
  EXPECT_EQ(r.per_layer_residual_mse.front(), 0.0);
  EXPECT_EQ(r.quantized.data, x.data);
  EXPECT_EQ(r.commitment_loss, 0.0);
}

TEST(Quantize, TiesBreakToLowestIndex) {
  auto state = QuantizerState::create(3, 1, 1, 0);
  state.layers[0].entries = {1.0, -1.0, 1.0};
  const auto r = quantize(state, FeatureMatrix(1, 2, std::vector<double>{0.0, 2.0}), 1);
  EXPECT_EQ(r.tokens(0, 0), 0u);  // equidistant from all three
  EXPECT_EQ(r.tokens(0, 1), 0u);  // entries 0 and 2 coincide
}

TEST(Quantize, ResidualTelescopesForEveryM) {
  const auto state = trained_state(16, 8, 8, 2);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_matrix(8, 32, rng);
    for (int m : kTrainingLayerOptions) {
      const auto r = quantize(state, x, m);
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        ASSERT_NEAR(x.data[i], r.quantized.data[i] + r.final_residual.data[i], 1e-12);
      }
    }
  }
}

TEST(Quantize, PerLayerResidualNonIncreasingOnTrainedCodebooks) {
  const auto state = trained_state(16, 8, 8, 4);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_matrix(8, 32, rng);
    const auto r = quantize(state, x, 8);
    double prev = 0.0;
    for (double v : x.data) prev += v * v / static_cast<double>(x.data.size());
    for (std::size_t l = 0; l < r.per_layer_residual_mse.size(); ++l) {
      ASSERT_LE(r.per_layer_residual_mse[l], prev) << "trial " << trial << " layer " << l;
      prev = r.per_layer_residual_mse[l];
    }
  }
}

TEST(Quantize, ZeroCodewordMakesEveryFrameNonIncreasing) {
  // With the origin available the nearest codeword can never lengthen a
  // residual, whatever the other codewords are.
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto state = QuantizerState::create(8, 5, 8, 0);
    for (auto& cb : state.layers) {
      cb.entries = gaussian(cb.entries.size(), rng, 3.0);
      std::fill(cb.entries.begin(), cb.entries.begin() + 5, 0.0);
    }
    const auto x = random_matrix(5, 10, rng);
    const auto r = quantize(state, x, 8);
    for (std::size_t f = 0; f < 10; ++f) {
      double prev = 1e300;
      for (const auto& in : r.layer_inputs) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < 5; ++j) n2 += in(j, f) * in(j, f);
        ASSERT_LE(n2, prev);
        prev = n2;
      }
    }
  }
}

TEST(Quantize, TokensForFewerLayersArePrefix) {
  const auto state = trained_state(16, 8, 8, 7);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_matrix(8, 32, rng);
    const auto full = quantize(state, x, 8);
    for (int m = 1; m <= 8; ++m) EXPECT_EQ(quantize(state, x, m).tokens, full.tokens.prefix(m));
  }
}

TEST(Quantize, MoreLayersNeverWorse) {
  const auto state = trained_state(16, 8, 8, 9);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_matrix(8, 32, rng);
    double prev = 1e300;
    for (int m : kTrainingLayerOptions) {
      const double e = quantize(state, x, m).per_layer_residual_mse.back();
      EXPECT_LE(e, prev);
      prev = e;
    }
  }
}

TEST(Quantize, IsDeterministic) {
  const auto state = trained_state(16, 8, 8, 11);
  std::mt19937_64 rng(12);
  const auto x = random_matrix(8, 32, rng);
  const auto a = quantize(state, x, 8), b = quantize(state, x, 8);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.quantized.data, b.quantized.data);
}

TEST(Quantize, CommitmentIsWeightedMse) {
  const auto state = trained_state(16, 8, 8, 13);
  std::mt19937_64 rng(14);
  const auto x = random_matrix(8, 32, rng);
  const auto r = quantize(state, x, 2);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    mse += std::pow(x.data[i] - r.quantized.data[i], 2) / static_cast<double>(x.data.size());
  }
  EXPECT_NEAR(r.commitment_loss, 0.25 * mse, 1e-14);
}

TEST(Quantize, Validation) {
  const auto state = QuantizerState::create(4, 3, 8, 0);
  EXPECT_THROW(quantize(state, FeatureMatrix(3, 2), 0), ParameterError);
  EXPECT_THROW(quantize(state, FeatureMatrix(3, 2), 9), ParameterError);
  EXPECT_THROW(quantize(state, FeatureMatrix(4, 2), 1), ShapeError);
  EXPECT_THROW(QuantizerState::create(0, 3), ParameterError);
}

// ---------------------------------------------------------------- dequantize

TEST(Dequantize, MatchesQuantizeBitExactly) {
  const auto state = trained_state(16, 8, 8, 15);
  std::mt19937_64 rng(16);
  const auto x = random_matrix(8, 20, rng);
  for (int m : kTrainingLayerOptions) {
    const auto r = quantize(state, x, m);
    EXPECT_EQ(dequantize(r.tokens, m, state).data, r.quantized.data);
  }
}

TEST(Dequantize, SingleLayerPicksEntries) {
  const auto state = trained_state(16, 4, 2, 17);
  TokenMatrix t(1, 3);
  t(0, 0) = 3;
  t(0, 1) = 15;
  t(0, 2) = 3;
  const auto y = dequantize(t, 1, state);
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y(j, f), state.layers[0].entry(t(0, f))[j]);
  }
}

TEST(Dequantize, LayerContributionsAreAdditive) {
  const auto state = trained_state(16, 6, 8, 18);
  std::mt19937_64 rng(19);
  TokenMatrix t(8, 7);
  for (auto& c : t.codes) c = static_cast<std::uint32_t>(rng() % 16);
  const auto y8 = dequantize(t, 8, state);
  const auto y4 = dequantize(t, 4, state);
  for (std::size_t f = 0; f < 7; ++f) {
    for (std::size_t j = 0; j < 6; ++j) {
      double tail = 0.0;
      for (std::size_t l = 4; l < 8; ++l) tail += state.layers[l].entry(t(l, f))[j];
      EXPECT_NEAR(y4(j, f), y8(j, f) - tail, 1e-12);
    }
  }
}

TEST(Dequantize, Validation) {
  const auto state = QuantizerState::create(4, 3, 8, 0);
  EXPECT_THROW(dequantize(TokenMatrix(2, 3), 4, state), ParameterError);
  TokenMatrix bad(1, 1);
  bad(0, 0) = 4;
  EXPECT_THROW(dequantize(bad, 1, state), RangeError);
}

// ---------------------------------------------------------------- ema_update

TEST(Ema, ConstantAssignmentConvergesGeometrically) {
  auto state = QuantizerState::create(4, 3, 1, 0);
  initialize_from_frames(state, FeatureMatrix(3, 4, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
  const std::vector<double> v{0.3, -1.2, 2.5};
  FeatureMatrix frames(3, 5);
  for (std::size_t f = 0; f < 5; ++f) {
    for (std::size_t j = 0; j < 3; ++j) frames(j, f) = v[j];
  }
  const std::vector<std::uint32_t> tokens(5, 2);
  for (int i = 0; i < 2000; ++i) ema_update(state, 0, frames, tokens);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(state.layers[0].entry(2)[j], v[j], 1e-6);
  // Closed form for the count: lambda^t * 1 + (1 - lambda^t) * 5.
  EXPECT_NEAR(state.layers[0].ema_counts[2], std::pow(0.99, 2000) + (1 - std::pow(0.99, 2000)) * 5, 1e-9);
}

TEST(Ema, UnassignedFreshCodeIsUnchanged) {
  auto state = QuantizerState::create(3, 2, 1, 0);
  state.layers[0].entries = {1, 2, 3, 4, 5, 6};
  const FeatureMatrix frames(2, 2, std::vector<double>{9, 9, 9, 9});
  const std::vector<std::uint32_t> tokens{0, 0};
  ema_update(state, 0, frames, tokens);
  EXPECT_EQ(state.layers[0].entry(1)[0], 3.0);
  EXPECT_EQ(state.layers[0].entry(2)[1], 6.0);
}

TEST(Ema, TwoClustersMatchLloyd) {
  std::mt19937_64 rng(20);
  std::normal_distribution<double> g(0.0, 0.5);
  FeatureMatrix data(2, 400);
  for (std::size_t f = 0; f < 400; ++f) {
    const double cx = f < 200 ? -5.0 : 5.0;
    data(0, f) = cx + g(rng);
    data(1, f) = 1.0 + g(rng);
  }
  auto state = QuantizerState::create(2, 2, 1, 21);
  initialize_from_frames(state, data);
  for (int it = 0; it < 2000; ++it) {
    const auto r = quantize(state, data, 1, true);
    ema_update(state, 0, r.layer_inputs[0], r.tokens.row(0));
  }
  // Lloyd oracle: with the clusters this far apart both land on the means.
  std::array<double, 2> mean_left{0, 0}, mean_right{0, 0};
  for (std::size_t f = 0; f < 400; ++f) {
    auto& m = f < 200 ? mean_left : mean_right;
    m[0] += data(0, f) / 200;
    m[1] += data(1, f) / 200;
  }
  const double sep = std::hypot(mean_left[0] - mean_right[0], mean_left[1] - mean_right[1]);
  for (const auto& m : {mean_left, mean_right}) {
    double best = 1e300;
    for (std::uint32_t c = 0; c < 2; ++c) {
      const auto e = state.layers[0].entry(c);
      best = std::min(best, std::hypot(e[0] - m[0], e[1] - m[1]));
    }
    EXPECT_LT(best, 0.01 * sep);
  }
}

TEST(Ema, Validation) {
  auto state = QuantizerState::create(2, 2, 1, 0);
  const FeatureMatrix frames(2, 1);
  const std::vector<std::uint32_t> ok{0}, bad{2}, wrong_len{0, 1};
  EXPECT_THROW(ema_update(state, 1, frames, ok), ParameterError);
  EXPECT_THROW(ema_update(state, 0, frames, bad), RangeError);
  EXPECT_THROW(ema_update(state, 0, frames, wrong_len), ShapeError);
}

// --------------------------------------------------------- dead-code reinit

TEST(DeadCodes, NothingDeadLeavesStateUnchanged) {
  auto state = QuantizerState::create(4, 2, 1, 0);
  std::fill(state.layers[0].ema_counts.begin(), state.layers[0].ema_counts.end(), 1.0);
  const auto before = state.layers[0].entries;
  EXPECT_EQ(reinit_dead_codes(state, 0, FeatureMatrix(2, 3, 7.0)), 0);
  EXPECT_EQ(state.layers[0].entries, before);
  EXPECT_EQ(state.rng_counter, 0u);
}

TEST(DeadCodes, SingleFrameBatchIsForced) {
  auto state = QuantizerState::create(3, 2, 1, 0);
  state.layers[0].ema_counts = {1.0, 0.0, 1.0};
  EXPECT_EQ(reinit_dead_codes(state, 0, FeatureMatrix(2, 1, std::vector<double>{4.0, -2.0})), 1);
  EXPECT_EQ(state.layers[0].entry(1)[0], 4.0);
  EXPECT_EQ(state.layers[0].entry(1)[1], -2.0);
  EXPECT_EQ(state.layers[0].entry(0)[0], 0.0);
}

TEST(DeadCodes, SeededAndReproducible) {
  std::mt19937_64 rng(22);
  const auto batch = random_matrix(4, 50, rng);
  const auto run = [&] {
    auto state = QuantizerState::create(16, 4, 1, 99);
    reinit_dead_codes(state, 0, batch);
    return state.layers[0].entries;
  };
  EXPECT_EQ(run(), run());
  auto other = QuantizerState::create(16, 4, 1, 100);
  reinit_dead_codes(other, 0, batch);
  EXPECT_NE(other.layers[0].entries, run());
}

// ------------------------------------------------------------- initialisation

TEST(Init, CodebooksDrawnFromFramesWithoutReplacement) {
  std::mt19937_64 rng(23);
  const auto frames = random_matrix(3, 40, rng);
  auto state = QuantizerState::create(16, 3, 2, 5);
  initialize_from_frames(state, frames);
  EXPECT_TRUE(state.initialized);
  std::map<std::size_t, int> used;
  for (std::uint32_t c = 0; c < 16; ++c) {
    const auto e = state.layers[0].entry(c);
    bool found = false;
    for (std::size_t f = 0; f < 40 && !found; ++f) {
      if (e[0] == frames(0, f) && e[1] == frames(1, f) && e[2] == frames(2, f)) {
        found = true;
        ++used[f];
      }
    }
    EXPECT_TRUE(found) << "codeword " << c << " is not a batch frame";
  }
  for (const auto& [f, n] : used) EXPECT_EQ(n, 1) << "frame " << f << " reused";
}

// ------------------------------------------------------------ layer sampling

TEST(LayerSampling, UniformOverOptions) {
  std::mt19937_64 rng(24);
  std::map<int, int> counts;
  for (int i = 0; i < 10000; ++i) ++counts[sample_active_layers(rng)];
  ASSERT_EQ(counts.size(), kTrainingLayerOptions.size());
  for (int m : kTrainingLayerOptions) EXPECT_NEAR(counts[m] / 10000.0, 0.2, 0.02) << "m=" << m;
}

TEST(LayerSampling, SameSeedSameSequence) {
  std::mt19937_64 a(25), b(25);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_active_layers(a), sample_active_layers(b));
}

// ---------------------------------------------------------------- perplexity

TEST(Perplexity, ClosedForms) {
  EXPECT_NEAR(codebook_perplexity(std::vector<std::uint32_t>(50, 7), 1024), 1.0, 1e-12);
  std::vector<std::uint32_t> all(1024);
  for (std::uint32_t i = 0; i < 1024; ++i) all[i] = i;
  EXPECT_NEAR(codebook_perplexity(all, 1024), 1024.0, 1e-9);
  EXPECT_NEAR(codebook_perplexity(std::vector<std::uint32_t>{3, 9, 3, 9}, 16), 2.0, 1e-12);
  EXPECT_THROW(codebook_perplexity(std::vector<std::uint32_t>{}, 4), ParameterError);
}

// ------------------------------------------------------------ straight-through

TEST(StraightThrough, GradientOfSumIsAllOnes) {
  const auto state = trained_state(16, 4, 8, 26);
  std::mt19937_64 rng(27);
  for (int m : kTrainingLayerOptions) {
    auto u = diff::Tensor::parameter({4, 6}, gaussian(24, rng));
    const auto q = quantize_tensor(state, u, m, true);
    diff::sum(q.quantized).backward();
    for (double g : u.grad()) EXPECT_EQ(g, 1.0);
    EXPECT_EQ(std::vector<double>(q.quantized.values().begin(), q.quantized.values().end()),
              q.result.quantized.data);
  }
}

TEST(StraightThrough, EvalModeIsConstant) {
  const auto state = trained_state(16, 4, 8, 28);
  std::mt19937_64 rng(29);
  auto u = diff::Tensor::parameter({4, 6}, gaussian(24, rng));
  EXPECT_FALSE(quantize_tensor(state, u, 8, false).quantized.requires_grad());
}

TEST(StraightThrough, CommitmentPullsInputTowardCodes) {
  const auto state = trained_state(16, 4, 8, 30);
  std::mt19937_64 rng(31);
  auto u = diff::Tensor::parameter({4, 6}, gaussian(24, rng));
  const auto q = quantize_tensor(state, u, 2, true);
  EXPECT_NEAR(q.commitment.item(), q.result.commitment_loss, 1e-14);
  q.commitment.backward();
  const auto g = u.grad();
  for (std::size_t i = 0; i < 24; ++i) {
    const double expected = 0.25 * 2.0 * (u.values()[i] - q.result.quantized.data[i]) / 24.0;
    EXPECT_NEAR(g[i], expected, 1e-15);
  }
}

}  // namespace
