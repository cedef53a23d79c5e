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
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "xcodec/diff/tensor.hpp"
#include "xcodec/error.hpp"

namespace xcodec::diff {

struct GradCheckFailure {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty(); }
};

struct GradCheckOptions {
  double h = 1e-6;
  double tol = 1e-4;
  // Denominator floor: coordinates whose gradients are both below this
  // magnitude are compared in absolute terms.
  double abs_floor = 1e-6;
  // Cap on probed coordinates per input; 0 checks all of them.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 7;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must rebuild its graph from `inputs` on every call.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  const GradCheckOptions& opt = {}) {
  for (auto& t : inputs) t.zero_grad();
  const Tensor y = f();
  if (y.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  y.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }

  const auto probe = [&](std::size_t which, std::size_t idx) {
    const double v = f().item();
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite value probing input " + std::to_string(which) +
                         " index " + std::to_string(idx));
    }
    return v;
  };

  std::mt19937_64 rng(opt.seed);
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto vals = inputs[i].mutable_values();
    std::vector<std::size_t> coords(vals.size());
    for (std::size_t c = 0; c < coords.size(); ++c) coords[c] = c;
    if (opt.max_coords_per_input > 0 && coords.size() > opt.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double orig = vals[c];
      vals[c] = orig + opt.h;
      const double fp = probe(i, c);
      vals[c] = orig - opt.h;
      const double fm = probe(i, c);
      vals[c] = orig;
      const double num = (fp - fm) / (2.0 * opt.h);
      const double ana = analytic[i][c];
      const double denom = std::max({std::abs(ana), std::abs(num), opt.abs_floor});
      const double rel = std::abs(ana - num) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (rel > opt.tol) report.failures.push_back({i, c, ana, num, rel});
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return report;
}

}  // namespace xcodec::diff
