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
#include <random>
#include <string>
#include <vector>

#include "xcodec/diff/ops.hpp"
#include "xcodec/diff/tensor.hpp"

namespace xcodec::codec {

/// Creates parameters in a fixed order from one seeded generator and records
/// them under their dotted names.
class ParameterFactory {
 public:
  ParameterFactory(std::vector<diff::Parameter>& registry, std::uint64_t seed)
      : registry_(registry), rng_(seed) {}

  // Kaiming-uniform with unit gain: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
  diff::Tensor weight(const std::string& name, diff::Shape shape, double fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(diff::numel(shape));
    for (double& x : v) x = dist(rng_);
    return add(name, std::move(shape), std::move(v));
  }

  diff::Tensor zeros(const std::string& name, diff::Shape shape) {
    const auto count = diff::numel(shape);
    return add(name, std::move(shape), std::vector<double>(count, 0.0));
  }

 private:
  diff::Tensor add(const std::string& name, diff::Shape shape, std::vector<double> v) {
    auto t = diff::Tensor::parameter(std::move(shape), std::move(v));
    registry_.push_back({name, t});
    return t;
  }

  std::vector<diff::Parameter>& registry_;
  std::mt19937_64 rng_;
};

struct Conv {
  diff::Tensor weight;  // C_out x C_in x k
  diff::Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv make(ParameterFactory& pf, const std::string& name, std::size_t cin,
                   std::size_t cout, std::size_t k, std::size_t stride, std::size_t padding) {
    Conv c;
    c.weight = pf.weight(name + ".weight", {cout, cin, k}, static_cast<double>(cin * k));
    c.bias = pf.zeros(name + ".bias", {cout});
    c.stride = stride;
    c.padding = padding;
    return c;
  }

  diff::Tensor operator()(const diff::Tensor& x) const {
    return diff::conv1d(x, weight, bias, stride, padding);
  }
};

struct ConvTranspose {
  diff::Tensor weight;  // C_in x C_out x k
  diff::Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static ConvTranspose make(ParameterFactory& pf, const std::string& name, std::size_t cin,
                            std::size_t cout, std::size_t k, std::size_t stride,
                            std::size_t padding) {
    ConvTranspose c;
    // Each output sample sees about k/stride taps per input channel.
    const double fan_in = static_cast<double>(cin) * std::ceil(double(k) / double(stride));
    c.weight = pf.weight(name + ".weight", {cin, cout, k}, fan_in);
    c.bias = pf.zeros(name + ".bias", {cout});
    c.stride = stride;
    c.padding = padding;
    return c;
  }

  diff::Tensor operator()(const diff::Tensor& x) const {
    return diff::conv_transpose1d(x, weight, bias, stride, padding);
  }
};

struct Linear {
  diff::Tensor weight;  // C_out x C_in
  diff::Tensor bias;

  static Linear make(ParameterFactory& pf, const std::string& name, std::size_t cin,
                     std::size_t cout) {
    Linear l;
    l.weight = pf.weight(name + ".weight", {cout, cin}, static_cast<double>(cin));
    l.bias = pf.zeros(name + ".bias", {cout});
    return l;
  }

  diff::Tensor operator()(const diff::Tensor& x) const { return diff::linear(x, weight, bias); }
};

/// x + conv_1x1(elu(conv_k(elu(x))))
struct ResidualUnit {
  Conv conv1;
  Conv conv2;

  static ResidualUnit make(ParameterFactory& pf, const std::string& name, std::size_t ch,
                           std::size_t k) {
    return {Conv::make(pf, name + ".conv1", ch, ch, k, 1, k / 2),
            Conv::make(pf, name + ".conv2", ch, ch, 1, 1, 0)};
  }

  diff::Tensor operator()(const diff::Tensor& x) const {
    return diff::add(x, conv2(diff::elu(conv1(diff::elu(x)))));
  }
};

}  // namespace xcodec::codec
