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
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xcodec/diff/tensor.hpp"
#include "xcodec/error.hpp"

namespace xcodec::diff {

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimizerState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;  // keyed by parameter name
};

/// Adam with bias correction. Every parameter must carry a gradient; the
/// gradients are cleared afterwards.
inline void adam_step(std::span<Parameter> params, OptimizerState& state) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw StateError("adam_step: parameter '" + p.name + "' has no grad");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& p : params) {
    auto& mom = state.moments[p.name];
    const std::size_t n = p.tensor.size();
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    if (mom.m.size() != n) throw StateError("adam_step: moment shape mismatch for " + p.name);
    auto w = p.tensor.mutable_values();
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < n; ++i) {
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g[i];
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.tensor.zero_grad();
  }
}

}  // namespace xcodec::diff
