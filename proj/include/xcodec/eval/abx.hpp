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
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xcodec/error.hpp"
#include "xcodec/matrix.hpp"
#include "xcodec/rvq/quantizer.hpp"

namespace xcodec::eval {

enum class FrameDistance { angular, euclidean };

/// Angle between two frames divided by pi, in [0, 1]. Computed as
/// 2*atan2(|u^ - v^|, |u^ + v^|), which is exact at 0 and 1 where arccos of
/// the cosine is not. A zero-norm frame is at distance 0.5 from everything.
inline double angular_distance(std::span<const double> u, std::span<const double> v) {
  double nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.5;
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] / nu, b = v[i] / nv;
    diff += (a - b) * (a - b);
    sum += (a + b) * (a + b);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) / std::numbers::pi;
}

inline double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(acc);
}

/// Frame-by-frame distance matrix, rows over a's frames.
inline FeatureMatrix frame_distances(const FeatureMatrix& a, const FeatureMatrix& b,
                                     FrameDistance kind) {
  FeatureMatrix d(a.cols, b.cols);
  const auto fa = a.transposed(), fb = b.transposed();
  for (std::size_t i = 0; i < a.cols; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      const auto u = fa.row(i), v = fb.row(j);
      d(i, j) = kind == FrameDistance::angular ? angular_distance(u, v) : euclidean_distance(u, v);
    }
  }
  return d;
}

/// DTW with steps (1,0), (0,1), (1,1). Among monotone alignments the one with
/// the smallest summed frame distance is chosen, shorter paths breaking ties;
/// the result is that cost divided by the path length.
inline double dtw_distance(const FeatureMatrix& a, const FeatureMatrix& b,
                           FrameDistance kind = FrameDistance::angular) {
  if (a.cols == 0 || b.cols == 0) throw ShapeError("dtw: sequences must have at least one frame");
  if (a.rows != b.rows) {
    throw ShapeError("dtw: channel counts differ (" + std::to_string(a.rows) + " vs " +
                     std::to_string(b.rows) + ")");
  }
  const FeatureMatrix d = frame_distances(a, b, kind);
  const std::size_t n = a.cols, m = b.cols;
  struct Cell {
    double cost;
    std::size_t len;
  };
  auto better = [](const Cell& x, const Cell& y) {
    return x.cost < y.cost || (x.cost == y.cost && x.len < y.len);
  };
  std::vector<Cell> acc(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Cell best{0.0, 0};
      if (i > 0 || j > 0) {
        best = {std::numeric_limits<double>::infinity(), 0};
        if (i > 0 && better(acc[(i - 1) * m + j], best)) best = acc[(i - 1) * m + j];
        if (j > 0 && better(acc[i * m + j - 1], best)) best = acc[i * m + j - 1];
        if (i > 0 && j > 0 && better(acc[(i - 1) * m + j - 1], best)) best = acc[(i - 1) * m + j - 1];
      }
      acc[i * m + j] = {best.cost + d(i, j), best.len + 1};
    }
  }
  const Cell& end = acc.back();
  return end.cost / static_cast<double>(end.len);
}

struct ABXItem {
  FeatureMatrix representation;  // channels x frames
  std::string category;
  std::string context;
};

enum class ABXMode { within, across };

inline std::string to_string(ABXMode m) { return m == ABXMode::within ? "within" : "across"; }

struct ABXScore {
  ABXMode mode = ABXMode::within;
  double error = 0.0;  // percent
  std::size_t n_triples = 0;
};

struct ABXResult {
  double within_error = 0.0;
  double across_error = 0.0;
  std::size_t n_triples = 0;  // both modes together
  std::size_t n_within = 0;
  std::size_t n_across = 0;
};

struct ABXOptions {
  std::size_t max_triples = 5000;
  std::uint64_t seed = 0;
  FrameDistance distance = FrameDistance::angular;
};

struct Triple {
  std::size_t a, b, x;
};

/// Every admissible (A, B, X) index triple. A and X share a category, B has
/// another. Within: all three share a context. Across: A and B share a
/// context and X comes from a different one.
inline std::vector<Triple> enumerate_triples(const std::vector<ABXItem>& items, ABXMode mode) {
  std::vector<Triple> out;
  for (std::size_t a = 0; a < items.size(); ++a) {
    for (std::size_t x = 0; x < items.size(); ++x) {
      if (x == a || items[x].category != items[a].category) continue;
      const bool same_ctx = items[x].context == items[a].context;
      if ((mode == ABXMode::within) != same_ctx) continue;
      for (std::size_t b = 0; b < items.size(); ++b) {
        if (items[b].category == items[a].category || items[b].context != items[a].context) continue;
        out.push_back({a, b, x});
      }
    }
  }
  return out;
}

inline void check_abx_corpus(const std::vector<ABXItem>& items, ABXMode mode) {
  std::map<std::string, int> cats, ctxs;
  std::size_t rows = 0;
  for (const auto& it : items) {
    if (it.representation.cols == 0) throw CorpusError("abx: item with no frames");
    if (rows == 0) rows = it.representation.rows;
    if (it.representation.rows != rows) throw CorpusError("abx: items differ in channel count");
    ++cats[it.category];
    ++ctxs[it.context];
  }
  if (cats.size() < 2) throw CorpusError("abx: need at least 2 categories, found " + std::to_string(cats.size()));
  if (mode == ABXMode::across && ctxs.size() < 2) {
    throw CorpusError("abx: across mode needs at least 2 contexts, found " + std::to_string(ctxs.size()));
  }
}

/// Percentage of sampled triples where X is not strictly closer to A than to
/// B; exact ties count half. Triples are enumerated, then a seeded shuffle
/// keeps at most max_triples of them.
inline ABXScore abx_error_rate(const std::vector<ABXItem>& items, ABXMode mode,
                               const ABXOptions& opt = {}) {
  check_abx_corpus(items, mode);
  auto triples = enumerate_triples(items, mode);
  if (triples.empty()) throw CorpusError("abx: no admissible " + to_string(mode) + " triples");
  if (opt.max_triples > 0 && triples.size() > opt.max_triples) {
    auto rng = rvq::derive_rng(opt.seed, mode == ABXMode::within ? 0 : 1);
    std::shuffle(triples.begin(), triples.end(), rng);
    triples.resize(opt.max_triples);
  }
  std::map<std::pair<std::size_t, std::size_t>, double> cache;
  auto dist = [&](std::size_t i, std::size_t j) {
    const auto key = std::minmax(i, j);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double d = dtw_distance(items[key.first].representation, items[key.second].representation,
                                  opt.distance);
    cache.emplace(key, d);
    return d;
  };
  double errors = 0.0;
  for (const auto& t : triples) {
    const double dax = dist(t.a, t.x), dbx = dist(t.b, t.x);
    if (dbx < dax) errors += 1.0;
    else if (dbx == dax) errors += 0.5;
  }
  return {mode, 100.0 * errors / static_cast<double>(triples.size()), triples.size()};
}

inline ABXResult abx_evaluate(const std::vector<ABXItem>& items, const ABXOptions& opt = {}) {
  const auto w = abx_error_rate(items, ABXMode::within, opt);
  const auto a = abx_error_rate(items, ABXMode::across, opt);
  return {w.error, a.error, w.n_triples + a.n_triples, w.n_triples, a.n_triples};
}

struct ManifestEntry {
  std::filesystem::path path;
  std::string category;
  std::string context;
};

/// `<path> <category> <context>` per line; blank lines and '#' comments are
/// skipped. Relative paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("cannot open manifest " + manifest.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string path, extra;
    if (!(ss >> path >> e.category >> e.context) || (ss >> extra)) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) +
                        ": expected '<path> <category> <context>'");
    }
    e.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                       : manifest.parent_path() / path;
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DatasetError("manifest " + manifest.string() + " lists no items");
  return out;
}

}  // namespace xcodec::eval
