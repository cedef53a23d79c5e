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
#include <cstddef>
#include <string>
#include <vector>

#include "xcodec/diff/tensor.hpp"
#include "xcodec/error.hpp"

// Forward operators with exact reverse-mode rules. Sequence tensors are laid
// out channels x time, row-major.
namespace xcodec::diff {

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

inline long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline long ceil_div(long a, long b) { return -floor_div(-a, b); }

// Inclusive range of output frames t with 0 <= t*stride + offset < limit.
inline std::pair<long, long> valid_range(long offset, long stride, long limit, long t_count) {
  const long lo = std::max(0L, ceil_div(-offset, stride));
  const long hi = std::min(t_count - 1, floor_div(limit - 1 - offset, stride));
  return {lo, hi};
}

inline bool wants(const Node& self, std::size_t i) {
  return i < self.inputs.size() && self.inputs[i]->requires_grad;
}

}  // namespace detail

/// Cross-correlation. input C_in x T, weight C_out x C_in x k, bias C_out
/// (may be undefined).
inline Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t stride, std::size_t padding) {
  detail::require_rank(input, 2, "conv1d", "input");
  detail::require_rank(weight, 3, "conv1d", "weight");
  if (stride < 1) throw ParameterError("conv1d: stride must be >= 1");
  const long cin = static_cast<long>(input.dim(0));
  const long t_in = static_cast<long>(input.dim(1));
  const long cout = static_cast<long>(weight.dim(0));
  const long k = static_cast<long>(weight.dim(2));
  const long s = static_cast<long>(stride);
  const long p = static_cast<long>(padding);
  if (static_cast<long>(weight.dim(1)) != cin) {
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(cin));
  }
  if (bias.defined() && (bias.rank() != 1 || static_cast<long>(bias.dim(0)) != cout)) {
    throw ShapeError("conv1d: bias shape " + shape_str(bias.shape()) + " does not match C_out");
  }
  if (k > t_in + 2 * p) throw ShapeError("conv1d: kernel longer than padded input");
  const long t_out = (t_in + 2 * p - k) / s + 1;

  const auto x = input.values();
  const auto w = weight.values();
  std::vector<double> out(static_cast<std::size_t>(cout * t_out), 0.0);
  for (long co = 0; co < cout; ++co) {
    double* o = out.data() + co * t_out;
    if (bias.defined()) std::fill(o, o + t_out, bias.values()[co]);
    for (long ci = 0; ci < cin; ++ci) {
      const double* xr = x.data() + ci * t_in;
      for (long j = 0; j < k; ++j) {
        const double wv = w[(co * cin + ci) * k + j];
        const auto [lo, hi] = detail::valid_range(j - p, s, t_in, t_out);
        if (s == 1) {
          const double* xs = xr + (j - p);
          for (long t = lo; t <= hi; ++t) o[t] += wv * xs[t];
        } else {
          for (long t = lo; t <= hi; ++t) o[t] += wv * xr[t * s + j - p];
        }
      }
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result(
      "conv1d", {static_cast<std::size_t>(cout), static_cast<std::size_t>(t_out)}, std::move(out),
      std::move(inputs), [=](Node& self) {
        const auto& g = self.grad;
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        const bool gx_on = detail::wants(self, 0);
        const bool gw_on = detail::wants(self, 1);
        if (gx_on) xn.ensure_grad();
        if (gw_on) wn.ensure_grad();
        for (long co = 0; co < cout; ++co) {
          const double* gr = g.data() + co * t_out;
          for (long ci = 0; ci < cin; ++ci) {
            const double* xr = xn.value.data() + ci * t_in;
            for (long j = 0; j < k; ++j) {
              const std::size_t widx = static_cast<std::size_t>((co * cin + ci) * k + j);
              const auto [lo, hi] = detail::valid_range(j - p, s, t_in, t_out);
              if (gw_on) {
                double acc = 0.0;
                for (long t = lo; t <= hi; ++t) acc += gr[t] * xr[t * s + j - p];
                wn.grad[widx] += acc;
              }
              if (gx_on) {
                const double wv = wn.value[widx];
                double* gxr = xn.grad.data() + ci * t_in;
                for (long t = lo; t <= hi; ++t) gxr[t * s + j - p] += wv * gr[t];
              }
            }
          }
        }
        if (detail::wants(self, 2)) {
          Node& bn = *self.inputs[2];
          bn.ensure_grad();
          for (long co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (long t = 0; t < t_out; ++t) acc += g[co * t_out + t];
            bn.grad[co] += acc;
          }
        }
      });
}

/// Transposed convolution, the adjoint of conv1d. input C_in x T, weight
/// C_in x C_out x k, bias C_out (may be undefined).
inline Tensor conv_transpose1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                               std::size_t stride, std::size_t padding) {
  detail::require_rank(input, 2, "conv_transpose1d", "input");
  detail::require_rank(weight, 3, "conv_transpose1d", "weight");
  if (stride < 1) throw ParameterError("conv_transpose1d: stride must be >= 1");
  const long cin = static_cast<long>(input.dim(0));
  const long t_in = static_cast<long>(input.dim(1));
  const long cout = static_cast<long>(weight.dim(1));
  const long k = static_cast<long>(weight.dim(2));
  const long s = static_cast<long>(stride);
  const long p = static_cast<long>(padding);
  if (static_cast<long>(weight.dim(0)) != cin) {
    throw ShapeError("conv_transpose1d: weight expects " + std::to_string(weight.dim(0)) +
                     " input channels, input has " + std::to_string(cin));
  }
  if (bias.defined() && (bias.rank() != 1 || static_cast<long>(bias.dim(0)) != cout)) {
    throw ShapeError("conv_transpose1d: bias shape does not match C_out");
  }
  const long t_out = (t_in - 1) * s + k - 2 * p;
  if (t_out <= 0) throw ShapeError("conv_transpose1d: non-positive output length");

  const auto x = input.values();
  const auto w = weight.values();
  std::vector<double> out(static_cast<std::size_t>(cout * t_out), 0.0);
  for (long co = 0; co < cout; ++co) {
    double* o = out.data() + co * t_out;
    if (bias.defined()) std::fill(o, o + t_out, bias.values()[co]);
    for (long ci = 0; ci < cin; ++ci) {
      const double* xr = x.data() + ci * t_in;
      for (long j = 0; j < k; ++j) {
        const double wv = w[(ci * cout + co) * k + j];
        const auto [lo, hi] = detail::valid_range(j - p, s, t_out, t_in);
        for (long t = lo; t <= hi; ++t) o[t * s + j - p] += wv * xr[t];
      }
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result(
      "conv_transpose1d", {static_cast<std::size_t>(cout), static_cast<std::size_t>(t_out)},
      std::move(out), std::move(inputs), [=](Node& self) {
        const auto& g = self.grad;
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        const bool gx_on = detail::wants(self, 0);
        const bool gw_on = detail::wants(self, 1);
        if (gx_on) xn.ensure_grad();
        if (gw_on) wn.ensure_grad();
        for (long co = 0; co < cout; ++co) {
          const double* gr = g.data() + co * t_out;
          for (long ci = 0; ci < cin; ++ci) {
            const double* xr = xn.value.data() + ci * t_in;
            for (long j = 0; j < k; ++j) {
              const std::size_t widx = static_cast<std::size_t>((ci * cout + co) * k + j);
              const auto [lo, hi] = detail::valid_range(j - p, s, t_out, t_in);
              if (gw_on) {
                double acc = 0.0;
                for (long t = lo; t <= hi; ++t) acc += xr[t] * gr[t * s + j - p];
                wn.grad[widx] += acc;
              }
              if (gx_on) {
                const double wv = wn.value[widx];
                double* gxr = xn.grad.data() + ci * t_in;
                for (long t = lo; t <= hi; ++t) gxr[t] += wv * gr[t * s + j - p];
              }
            }
          }
        }
        if (detail::wants(self, 2)) {
          Node& bn = *self.inputs[2];
          bn.ensure_grad();
          for (long co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (long t = 0; t < t_out; ++t) acc += g[co * t_out + t];
            bn.grad[co] += acc;
          }
        }
      });
}

inline Tensor elu(const Tensor& input) {
  std::vector<double> out(input.size());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
  return make_op_result("elu", input.shape(), std::move(out), {input}, [](Node& self) {
    Node& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double d = xn.value[i] > 0.0 ? 1.0 : self.value[i] + 1.0;
      xn.grad[i] += self.grad[i] * d;
    }
  });
}

inline Tensor tanh(const Tensor& input) {
  std::vector<double> out(input.size());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return make_op_result("tanh", input.shape(), std::move(out), {input}, [](Node& self) {
    Node& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn.grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    }
  });
}

/// Per-frame affine map: input C_in x T, weight C_out x C_in, bias C_out.
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(input, 2, "linear", "input");
  detail::require_rank(weight, 2, "linear", "weight");
  const std::size_t cin = input.dim(0);
  const std::size_t t = input.dim(1);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " vs input " +
                     shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " does not match C_out");
  }
  const auto x = input.values();
  const auto w = weight.values();
  std::vector<double> out(cout * t, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * t;
    if (bias.defined()) std::fill(o, o + t, bias.values()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double wv = w[co * cin + ci];
      const double* xr = x.data() + ci * t;
      for (std::size_t f = 0; f < t; ++f) o[f] += wv * xr[f];
    }
  }
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result("linear", {cout, t}, std::move(out), std::move(inputs), [=](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const bool gx_on = detail::wants(self, 0);
    const bool gw_on = detail::wants(self, 1);
    if (gx_on) xn.ensure_grad();
    if (gw_on) wn.ensure_grad();
    for (std::size_t co = 0; co < cout; ++co) {
      const double* gr = self.grad.data() + co * t;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = xn.value.data() + ci * t;
        if (gw_on) {
          double acc = 0.0;
          for (std::size_t f = 0; f < t; ++f) acc += gr[f] * xr[f];
          wn.grad[co * cin + ci] += acc;
        }
        if (gx_on) {
          const double wv = wn.value[co * cin + ci];
          double* gxr = xn.grad.data() + ci * t;
          for (std::size_t f = 0; f < t; ++f) gxr[f] += wv * gr[f];
        }
      }
    }
    if (detail::wants(self, 2)) {
      Node& bn = *self.inputs[2];
      bn.ensure_grad();
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (std::size_t f = 0; f < t; ++f) acc += self.grad[co * t + f];
        bn.grad[co] += acc;
      }
    }
  });
}

/// Stacks a (C_a x T) on top of b (C_b x T).
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat_channels", "a");
  detail::require_rank(b, 2, "concat_channels", "b");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_channels: frame counts differ (" + std::to_string(a.dim(1)) +
                     " vs " + std::to_string(b.dim(1)) + ")");
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const std::size_t na = a.size();
  return make_op_result("concat_channels", {a.dim(0) + b.dim(0), a.dim(1)}, std::move(out),
                        {a, b}, [na](Node& self) {
                          if (detail::wants(self, 0)) {
                            Node& an = *self.inputs[0];
                            an.ensure_grad();
                            for (std::size_t i = 0; i < na; ++i) an.grad[i] += self.grad[i];
                          }
                          if (detail::wants(self, 1)) {
                            Node& bn = *self.inputs[1];
                            bn.ensure_grad();
                            for (std::size_t i = 0; i < bn.grad.size(); ++i) {
                              bn.grad[i] += self.grad[na + i];
                            }
                          }
                        });
}

/// Rows [begin, end) of a C x T tensor.
inline Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 2, "slice_channels", "input");
  if (begin >= end || end > x.dim(0)) throw ShapeError("slice_channels: bad row range");
  const std::size_t t = x.dim(1);
  std::vector<double> out(x.values().begin() + static_cast<long>(begin * t),
                          x.values().begin() + static_cast<long>(end * t));
  return make_op_result("slice_channels", {end - begin, t}, std::move(out), {x},
                        [begin, t](Node& self) {
                          Node& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            xn.grad[begin * t + i] += self.grad[i];
                          }
                        });
}

/// Zero padding along time.
inline Tensor pad_time(const Tensor& x, std::size_t left, std::size_t right) {
  detail::require_rank(x, 2, "pad_time", "input");
  const std::size_t c = x.dim(0), t = x.dim(1), tn = t + left + right;
  std::vector<double> out(c * tn, 0.0);
  for (std::size_t r = 0; r < c; ++r) {
    std::copy_n(x.values().begin() + static_cast<long>(r * t), t,
                out.begin() + static_cast<long>(r * tn + left));
  }
  return make_op_result("pad_time", {c, tn}, std::move(out), {x}, [=](Node& self) {
    Node& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t r = 0; r < c; ++r) {
      for (std::size_t i = 0; i < t; ++i) xn.grad[r * t + i] += self.grad[r * tn + left + i];
    }
  });
}

/// Frames [begin, begin + length) of a C x T tensor.
inline Tensor crop_time(const Tensor& x, std::size_t begin, std::size_t length) {
  detail::require_rank(x, 2, "crop_time", "input");
  const std::size_t c = x.dim(0), t = x.dim(1);
  if (begin + length > t || length == 0) throw ShapeError("crop_time: range outside input");
  std::vector<double> out(c * length);
  for (std::size_t r = 0; r < c; ++r) {
    std::copy_n(x.values().begin() + static_cast<long>(r * t + begin), length,
                out.begin() + static_cast<long>(r * length));
  }
  return make_op_result("crop_time", {c, length}, std::move(out), {x}, [=](Node& self) {
    Node& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t r = 0; r < c; ++r) {
      for (std::size_t i = 0; i < length; ++i) {
        xn.grad[r * t + begin + i] += self.grad[r * length + i];
      }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_op_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants(self, k)) continue;
      Node& n = *self.inputs[k];
      n.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make_op_result("scale", a.shape(), std::move(out), {a}, [c](Node& self) {
    Node& n = *self.inputs[0];
    n.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += c * self.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_op_result("sum", {}, {acc}, {a}, [](Node& self) {
    Node& n = *self.inputs[0];
    n.ensure_grad();
    for (double& g : n.grad) g += self.grad[0];
  });
}

/// Mean of squared differences; gradient 2(a-b)/N to a and its negative to b.
inline Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    acc += d * d;
  }
  return make_op_result("mse", {}, {acc * inv_n}, {a, b}, [inv_n](Node& self) {
    const Node& an = *self.inputs[0];
    const Node& bn = *self.inputs[1];
    const double g = self.grad[0] * 2.0 * inv_n;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants(self, k)) continue;
      Node& n = *self.inputs[k];
      n.ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        n.grad[i] += sign * g * (an.value[i] - bn.value[i]);
      }
    }
  });
}

/// Forward value `replacement`, backward identity to `input`.
inline Tensor straight_through(const Tensor& input, std::vector<double> replacement) {
  if (replacement.size() != input.size()) {
    throw ShapeError("straight_through: replacement size does not match input");
  }
  return make_op_result("straight_through", input.shape(), std::move(replacement), {input},
                        [](Node& self) {
                          Node& n = *self.inputs[0];
                          n.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            n.grad[i] += self.grad[i];
                          }
                        });
}

}  // namespace xcodec::diff
