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
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xcodec/codec/model.hpp"
#include "xcodec/diff/adam.hpp"
#include "xcodec/diff/sckp.hpp"
#include "xcodec/error.hpp"

namespace xcodec::training {

enum class TrainMode { xcodec, baseline };

inline std::string to_string(TrainMode m) { return m == TrainMode::xcodec ? "xcodec" : "baseline"; }

inline TrainMode parse_mode(const std::string& s) {
  if (s == "xcodec") return TrainMode::xcodec;
  if (s == "baseline") return TrainMode::baseline;
  throw ParameterError("unknown mode '" + s + "' (expected xcodec or baseline)");
}

/// Everything needed to continue training bit-exactly: parameters, quantizer
/// EMA statistics, Adam moments, the step counter and the frozen gamma.
struct TrainingState {
  codec::CodecModel model;
  diff::OptimizerState optimizer;
  std::uint64_t step = 0;
  // Unset until calibrated on the first step (or fixed by configuration).
  std::optional<double> gamma;

  TrainMode mode() const {
    return model.config().semantic_enabled ? TrainMode::xcodec : TrainMode::baseline;
  }
};

namespace detail {

inline diff::NamedArray scalar_entry(std::string name, double v) { return {std::move(name), {}, {v}}; }

inline std::vector<std::uint32_t> dims_of(const diff::Shape& s) {
  return {s.begin(), s.end()};
}

// 64-bit seeds do not fit a double exactly, so they are stored as two halves.
inline void push_u64(std::vector<diff::NamedArray>& out, const std::string& name, std::uint64_t v) {
  out.push_back({name, {2},
                 {static_cast<double>(v & 0xFFFFFFFFu), static_cast<double>(v >> 32)}});
}

class EntryIndex {
 public:
  EntryIndex(const std::vector<diff::NamedArray>& entries, std::string what) : what_(std::move(what)) {
    for (const auto& e : entries) by_name_[e.name] = &e;
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  const diff::NamedArray& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw FormatError(what_ + ": missing entry '" + name + "'");
    return *it->second;
  }

  double scalar(const std::string& name) const {
    const auto& e = get(name);
    if (e.values.size() != 1) throw FormatError(what_ + ": entry '" + name + "' is not a scalar");
    return e.values[0];
  }

  std::size_t count(const std::string& name) const {
    const double v = scalar(name);
    if (!(v >= 0.0) || v != std::floor(v)) {
      throw FormatError(what_ + ": entry '" + name + "' is not a count");
    }
    return static_cast<std::size_t>(v);
  }

  std::uint64_t u64(const std::string& name) const {
    const auto& e = get(name);
    if (e.values.size() != 2) throw FormatError(what_ + ": entry '" + name + "' is not a u64");
    return static_cast<std::uint64_t>(e.values[0]) | (static_cast<std::uint64_t>(e.values[1]) << 32);
  }

  std::vector<double> values(const std::string& name, std::size_t expected) const {
    const auto& e = get(name);
    if (e.values.size() != expected) {
      throw FormatError(what_ + ": entry '" + name + "' has " + std::to_string(e.values.size()) +
                        " values, expected " + std::to_string(expected));
    }
    return e.values;
  }

 private:
  std::string what_;
  std::map<std::string, const diff::NamedArray*> by_name_;
};

}  // namespace detail

/// Config echo stored under "meta.*".
inline void append_config(std::vector<diff::NamedArray>& out, const codec::CodecConfig& c) {
  using detail::scalar_entry;
  out.push_back(scalar_entry("meta.sample_rate", c.sample_rate));
  out.push_back({"meta.downsample_rates",
                 {static_cast<std::uint32_t>(c.downsample_rates.size())},
                 {c.downsample_rates.begin(), c.downsample_rates.end()}});
  out.push_back(scalar_entry("meta.acoustic_hidden", static_cast<double>(c.acoustic_hidden)));
  out.push_back(scalar_entry("meta.semantic_dim", static_cast<double>(c.semantic_dim)));
  out.push_back(scalar_entry("meta.semantic_hidden", static_cast<double>(c.semantic_hidden)));
  out.push_back(scalar_entry("meta.fused_dim", static_cast<double>(c.fused_dim)));
  out.push_back(scalar_entry("meta.codebook_size", static_cast<double>(c.codebook_size)));
  out.push_back(scalar_entry("meta.max_layers", static_cast<double>(c.max_layers)));
  out.push_back(scalar_entry("meta.base_channels", static_cast<double>(c.base_channels)));
  out.push_back(scalar_entry("meta.kernel_size", static_cast<double>(c.kernel_size)));
  out.push_back(scalar_entry("meta.commitment_weight", c.commitment_weight));
  out.push_back(scalar_entry("meta.ema_decay", c.ema_decay));
  out.push_back(scalar_entry("meta.dead_threshold", c.dead_threshold));
  out.push_back(scalar_entry("meta.semantic_enabled", c.semantic_enabled ? 1.0 : 0.0));
  detail::push_u64(out, "meta.seed", c.seed);
  // Decoder output is trimmed symmetrically: left = (T*320 - n) / 2.
  out.push_back(scalar_entry("meta.trim_centered", 1.0));
}

inline codec::CodecConfig read_config(const detail::EntryIndex& idx) {
  codec::CodecConfig c;
  c.sample_rate = static_cast<int>(idx.count("meta.sample_rate"));
  const auto& rates = idx.get("meta.downsample_rates");
  c.downsample_rates.clear();
  for (double r : rates.values) c.downsample_rates.push_back(static_cast<int>(r));
  c.acoustic_hidden = idx.count("meta.acoustic_hidden");
  c.semantic_dim = idx.count("meta.semantic_dim");
  c.semantic_hidden = idx.count("meta.semantic_hidden");
  c.fused_dim = idx.count("meta.fused_dim");
  c.codebook_size = idx.count("meta.codebook_size");
  c.max_layers = idx.count("meta.max_layers");
  c.base_channels = idx.count("meta.base_channels");
  c.kernel_size = idx.count("meta.kernel_size");
  c.commitment_weight = idx.scalar("meta.commitment_weight");
  c.ema_decay = idx.scalar("meta.ema_decay");
  c.dead_threshold = idx.scalar("meta.dead_threshold");
  c.semantic_enabled = idx.scalar("meta.semantic_enabled") != 0.0;
  c.seed = idx.u64("meta.seed");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  return c;
}

inline std::vector<diff::NamedArray> checkpoint_entries(const TrainingState& s) {
  using detail::scalar_entry;
  std::vector<diff::NamedArray> out;
  append_config(out, s.model.config());
  out.push_back(scalar_entry("train.step", static_cast<double>(s.step)));
  out.push_back({"train.gamma", {static_cast<std::uint32_t>(s.gamma ? 1 : 0)},
                 s.gamma ? std::vector<double>{*s.gamma} : std::vector<double>{}});

  for (const auto& p : s.model.parameters()) {
    out.push_back({p.name, detail::dims_of(p.tensor.shape()),
                   {p.tensor.values().begin(), p.tensor.values().end()}});
  }

  const auto& q = s.model.quantizer();
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    const auto& cb = q.layers[l];
    const std::string pre = "rvq.layer" + std::to_string(l);
    const auto k = static_cast<std::uint32_t>(cb.size), d = static_cast<std::uint32_t>(cb.dim);
    out.push_back({pre + ".entries", {k, d}, cb.entries});
    out.push_back({pre + ".ema_counts", {k}, cb.ema_counts});
    out.push_back({pre + ".ema_sums", {k, d}, cb.ema_sums});
  }
  out.push_back(scalar_entry("rvq.initialized", q.initialized ? 1.0 : 0.0));
  detail::push_u64(out, "rvq.rng_seed", q.rng_seed);
  detail::push_u64(out, "rvq.rng_counter", q.rng_counter);

  const auto& o = s.optimizer;
  out.push_back({"adam.hyper", {4}, {o.lr, o.beta1, o.beta2, o.eps}});
  out.push_back(scalar_entry("adam.step", static_cast<double>(o.step)));
  for (const auto& [name, mom] : o.moments) {
    const auto n = static_cast<std::uint32_t>(mom.m.size());
    out.push_back({"adam.m." + name, {n}, mom.m});
    out.push_back({"adam.v." + name, {n}, mom.v});
  }
  return out;
}

inline std::vector<char> encode_checkpoint(const TrainingState& s) {
  return diff::encode_sckp(checkpoint_entries(s));
}

inline void save_checkpoint(const TrainingState& s, const std::filesystem::path& path) {
  diff::write_sckp(path, checkpoint_entries(s));
}

inline TrainingState state_from_entries(const std::vector<diff::NamedArray>& entries,
                                        const std::string& what) {
  const detail::EntryIndex idx(entries, what);
  TrainingState s{codec::CodecModel(read_config(idx)), {}, 0, std::nullopt};
  s.step = idx.count("train.step");
  const auto& g = idx.get("train.gamma");
  if (g.values.size() > 1) throw FormatError(what + ": malformed train.gamma");
  if (!g.values.empty()) s.gamma = g.values[0];

  for (auto& p : s.model.parameters()) {
    const auto& e = idx.get(p.name);
    if (e.dims != detail::dims_of(p.tensor.shape())) {
      throw FormatError(what + ": parameter '" + p.name + "' has shape " +
                        diff::shape_str({e.dims.begin(), e.dims.end()}) + ", model expects " +
                        diff::shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(e.values.begin(), e.values.end(), dst.begin());
  }
  for (const auto& e : entries) {
    const bool is_param = e.name.rfind("meta.", 0) != 0 && e.name.rfind("train.", 0) != 0 &&
                          e.name.rfind("rvq.", 0) != 0 && e.name.rfind("adam.", 0) != 0;
    if (is_param && s.model.find_parameter(e.name) == nullptr) {
      throw FormatError(what + ": unexpected parameter '" + e.name + "'");
    }
  }

  auto& q = s.model.quantizer();
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    auto& cb = q.layers[l];
    const std::string pre = "rvq.layer" + std::to_string(l);
    cb.entries = idx.values(pre + ".entries", cb.size * cb.dim);
    cb.ema_counts = idx.values(pre + ".ema_counts", cb.size);
    cb.ema_sums = idx.values(pre + ".ema_sums", cb.size * cb.dim);
  }
  q.initialized = idx.scalar("rvq.initialized") != 0.0;
  q.rng_seed = idx.u64("rvq.rng_seed");
  q.rng_counter = idx.u64("rvq.rng_counter");

  const auto hyper = idx.values("adam.hyper", 4);
  s.optimizer.lr = hyper[0];
  s.optimizer.beta1 = hyper[1];
  s.optimizer.beta2 = hyper[2];
  s.optimizer.eps = hyper[3];
  s.optimizer.step = idx.count("adam.step");
  for (const auto& p : s.model.parameters()) {
    if (!idx.has("adam.m." + p.name)) continue;
    diff::AdamMoments mom;
    mom.m = idx.values("adam.m." + p.name, p.tensor.size());
    mom.v = idx.values("adam.v." + p.name, p.tensor.size());
    s.optimizer.moments[p.name] = std::move(mom);
  }
  return s;
}

/// Loads a checkpoint; when `expected` is given the stored mode must match.
inline TrainingState load_checkpoint(const std::filesystem::path& path,
                                     std::optional<TrainMode> expected = std::nullopt) {
  TrainingState s = state_from_entries(diff::read_sckp(path), path.string());
  if (expected && *expected != s.mode()) {
    throw ModeMismatchError(path.string() + ": checkpoint was trained in " + to_string(s.mode()) +
                            " mode, requested " + to_string(*expected));
  }
  return s;
}

}  // namespace xcodec::training
