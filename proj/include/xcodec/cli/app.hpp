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

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xcodec/cli/ini.hpp"
#include "xcodec/cli/token_file.hpp"
#include "xcodec/codec/config.hpp"
#include "xcodec/diff/sckp.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/eval/abx.hpp"
#include "xcodec/eval/recon.hpp"
#include "xcodec/semantic/features.hpp"
#include "xcodec/synth/corpus.hpp"
#include "xcodec/training/checkpoint.hpp"
#include "xcodec/training/trainer.hpp"

namespace xcodec::cli {

enum ExitCode : int { kOk = 0, kAssertion = 1, kUsage = 2, kDataset = 3 };

/// Raised when a requested check (such as --compare) does not hold.
class AssertionFailure : public Error {
 public:
  using Error::Error;
};

/// Maps library errors onto the exit-code contract.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const AssertionFailure*>(&e)) return kAssertion;
  if (dynamic_cast<const DatasetError*>(&e) || dynamic_cast<const CorpusError*>(&e) ||
      dynamic_cast<const IoError*>(&e)) {
    return kDataset;
  }
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const StateError*>(&e)) return kAssertion;
  return kUsage;
}

/// Codec and training settings resolved from a config file.
struct RunConfig {
  codec::CodecConfig codec = codec::CodecConfig::desk();
  training::TrainConfig train;
  std::optional<std::filesystem::path> corpus_dir;
};

inline codec::CodecConfig preset(const std::string& name) {
  if (name == "desk") return codec::CodecConfig::desk();
  if (name == "tiny") return codec::CodecConfig::tiny();
  if (name == "full") return codec::CodecConfig{};
  throw ConfigError("unknown codec preset '" + name + "'");
}

/// Reads [codec], [train] and [corpus] sections; unknown keys are errors.
inline RunConfig read_run_config(const IniFile& ini) {
  RunConfig rc;
  if (ini.has("codec.preset")) {
    try {
      rc.codec = preset(ini.get_string("codec.preset"));
    } catch (const ConfigError& e) {
      ini.fail(ini.values().at("codec.preset"), e.what());
    }
  }
  auto& c = rc.codec;
  auto& t = rc.train;
  for (const auto& [key, v] : ini.values()) {
    if (key == "codec.preset") continue;
    else if (key == "codec.sample_rate") c.sample_rate = ini.get_number<int>(key);
    else if (key == "codec.downsample_rates") c.downsample_rates = ini.get_int_list(key);
    else if (key == "codec.acoustic_hidden") c.acoustic_hidden = ini.get_number<std::size_t>(key);
    else if (key == "codec.semantic_dim") c.semantic_dim = ini.get_number<std::size_t>(key);
    else if (key == "codec.semantic_hidden") c.semantic_hidden = ini.get_number<std::size_t>(key);
    else if (key == "codec.fused_dim") c.fused_dim = ini.get_number<std::size_t>(key);
    else if (key == "codec.codebook_size") c.codebook_size = ini.get_number<std::size_t>(key);
    else if (key == "codec.max_layers") c.max_layers = ini.get_number<std::size_t>(key);
    else if (key == "codec.base_channels") c.base_channels = ini.get_number<std::size_t>(key);
    else if (key == "codec.kernel_size") c.kernel_size = ini.get_number<std::size_t>(key);
    else if (key == "codec.commitment_weight") c.commitment_weight = ini.get_number<double>(key);
    else if (key == "codec.ema_decay") c.ema_decay = ini.get_number<double>(key);
    else if (key == "codec.dead_threshold") c.dead_threshold = ini.get_number<double>(key);
    else if (key == "train.steps") t.steps = ini.get_number<std::size_t>(key);
    else if (key == "train.batch_size") t.batch_size = ini.get_number<std::size_t>(key);
    else if (key == "train.segment_samples") t.segment_samples = ini.get_number<std::size_t>(key);
    else if (key == "train.lr") t.lr = ini.get_number<double>(key);
    else if (key == "train.seed") t.seed = ini.get_number<std::uint64_t>(key);
    else if (key == "train.checkpoint_every") t.checkpoint_every = ini.get_number<std::size_t>(key);
    else if (key == "train.dead_code_every") t.dead_code_every = ini.get_number<std::size_t>(key);
    else if (key == "train.gamma") t.gamma = ini.get_number<double>(key);
    else if (key == "corpus.dir") {
      std::filesystem::path p = ini.get_string(key);
      if (p.is_relative()) p = std::filesystem::path(ini.source()).parent_path() / p;
      rc.corpus_dir = p;
    } else {
      ini.fail(v, "unknown key '" + key + "'");
    }
  }
  try {
    c.validate();
    t.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(ini.source() + ": " + e.what());
  }
  return rc;
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Per-layer perplexity of the EMA usage counts stored in a checkpoint.
inline double count_perplexity(const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return std::exp(h);
}

inline std::vector<int> parse_layer_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError("invalid layer list '" + s + "'");
    }
  }
  if (out.empty()) throw ParameterError("layer list is empty");
  return out;
}

// Semantic features for a waveform: explicit path, else the sibling .sfea.
inline std::optional<semantic::SemanticFeatures> features_for(
    const codec::CodecModel& model, const std::filesystem::path& wav, std::size_t n,
    const std::optional<std::filesystem::path>& explicit_path) {
  if (!model.config().semantic_enabled) return std::nullopt;
  std::filesystem::path p = explicit_path ? *explicit_path : wav;
  if (!explicit_path) p.replace_extension(".sfea");
  if (!std::filesystem::exists(p)) {
    throw DatasetError("missing semantic features for '" + wav.string() + "' (looked for " +
                       p.string() + ")");
  }
  auto f = semantic::load_features(p);
  if (f.dim() != model.config().semantic_dim) {
    throw ShapeError(p.string() + ": features have " + std::to_string(f.dim()) +
                     " channels, checkpoint expects " + std::to_string(model.config().semantic_dim));
  }
  return semantic::align_frames(f, static_cast<long>(model.config().frames_for(n)));
}

}  // namespace detail

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  bool quiet = false;
};

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(std::vector<std::string> args) {
    CLI::App app{"xcodec: neural audio codec with semantic and acoustic branches"};
    app.set_help_all_flag("--help-all");
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    std::string config;
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
    auto* config_opt = app.add_option("--config", config, "Configuration file (key = value)");
    app.add_flag("--quiet", g_.quiet, "Suppress progress output");

    // train
    auto* train = app.add_subcommand("train", "Train a codec");
    std::string mode = "xcodec", out_dir, resume, corpus;
    train->add_option("--mode", mode, "xcodec or baseline")->check(CLI::IsMember({"xcodec", "baseline"}));
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--resume", resume, "Checkpoint to continue from");
    train->add_option("--corpus", corpus, "Corpus directory (overrides the config)");

    // encode
    auto* encode = app.add_subcommand("encode", "Audio to tokens");
    std::string ckpt, input, features, output;
    int layers = 8;
    encode->add_option("--checkpoint", ckpt)->required();
    encode->add_option("--input", input, "16-bit PCM WAV")->required();
    encode->add_option("--features", features, "SFEA file (default: <input>.sfea)");
    encode->add_option("--layers,-m", layers, "Active quantizer layers");
    encode->add_option("--output", output)->required();

    // decode
    auto* decode = app.add_subcommand("decode", "Tokens to audio");
    std::string tokens_path;
    decode->add_option("--checkpoint", ckpt)->required();
    decode->add_option("--tokens", tokens_path)->required();
    decode->add_option("--output", output)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "ABX or reconstruction evaluation");
    std::string suite, manifest, layer_list = "1,8", tap = "post_vq", distance = "angular";
    std::vector<std::string> compare;
    std::size_t max_triples = 5000;
    eval->add_option("--suite", suite)->required()->check(CLI::IsMember({"abx", "recon"}));
    eval->add_option("--checkpoint", ckpt);
    eval->add_option("--compare", compare, "Baseline and X-Codec checkpoints")->expected(2);
    eval->add_option("--manifest", manifest, "ABX manifest, or a corpus directory for recon");
    eval->add_option("--layers", layer_list, "Comma-separated layer counts");
    eval->add_option("--tap", tap)->check(CLI::IsMember({"pre_vq", "post_vq"}));
    eval->add_option("--distance", distance)->check(CLI::IsMember({"angular", "euclidean"}));
    eval->add_option("--max-triples", max_triples);

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint, token or feature file");
    std::string path;
    inspect->add_option("path", path)->required();

    // synth-corpus
    auto* synth = app.add_subcommand("synth-corpus", "Write the seeded synthetic phoneme corpus");
    synth::CorpusConfig scfg;
    synth->add_option("--out", out_dir)->required();
    synth->add_option("--clips", scfg.train_clips);
    synth->add_option("--feature-dim", scfg.feature_dim);
    synth->add_option("--contexts", scfg.n_contexts);
    synth->add_option("--repeats", scfg.abx_repeats);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      app.parse(rev);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kOk : kUsage;
    }
    if (*seed_opt) g_.seed = seed;
    if (*config_opt) g_.config = config;

    try {
      if (*train) return cmd_train(mode, out_dir, resume, corpus);
      if (*encode) return cmd_encode(ckpt, input, features, layers, output);
      if (*decode) return cmd_decode(ckpt, tokens_path, output);
      if (*eval) {
        return cmd_eval(suite, ckpt, compare, manifest, detail::parse_layer_list(layer_list), tap,
                        distance, max_triples);
      }
      if (*inspect) return cmd_inspect(path);
      if (*synth) {
        scfg.seed = g_.seed.value_or(0);
        const auto corpus_data = synth::generate(scfg);
        synth::write_corpus(corpus_data, out_dir);
        if (!g_.quiet) {
          out_ << "wrote " << corpus_data.train.size() << " training clips and "
               << corpus_data.abx.size() << " ABX items to " << out_dir << "\n";
        }
        return kOk;
      }
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return exit_code_for(e);
    }
    return kUsage;
  }

 private:
  int cmd_train(const std::string& mode_name, const std::string& out_dir, const std::string& resume,
                const std::string& corpus_override) {
    RunConfig rc;
    if (g_.config) rc = read_run_config(IniFile::load(*g_.config));
    if (g_.seed) rc.train.seed = *g_.seed;
    if (!corpus_override.empty()) rc.corpus_dir = corpus_override;
    if (!rc.corpus_dir) throw ConfigError("train: no corpus (set [corpus] dir or --corpus)");
    const auto mode = training::parse_mode(mode_name);
    auto corpus = training::load_corpus_dir(*rc.corpus_dir, mode);
    auto state = resume.empty() ? training::initial_state(rc.codec, mode, rc.train)
                                : training::load_checkpoint(resume, mode);
    training::LogSink sink;
    if (!g_.quiet) sink = [this](const std::string& line, const training::StepResult&) { out_ << line << "\n"; };
    const auto final_path = training::train_loop(state, std::move(corpus), rc.train, out_dir, sink);
    if (!g_.quiet) out_ << "checkpoint=" << final_path.string() << "\n";
    return kOk;
  }

  int cmd_encode(const std::string& ckpt, const std::string& input, const std::string& features,
                 int m, const std::string& output) {
    auto state = training::load_checkpoint(ckpt);
    const auto& model = state.model;
    rvq::check_layers(model.quantizer(), m);
    const auto wave = dsp::load_wav(input);
    const auto feats = detail::features_for(
        model, input, wave.samples.size(),
        features.empty() ? std::nullopt : std::optional<std::filesystem::path>(features));
    TokenFile f;
    f.sample_rate = static_cast<std::uint32_t>(wave.sample_rate);
    f.original_length = wave.samples.size();
    f.codebook_size = static_cast<std::uint16_t>(model.config().codebook_size);
    f.tokens = model.encode_tokens(wave, feats ? &*feats : nullptr, m);
    write_token_file(f, output);
    if (!g_.quiet) {
      out_ << "T=" << f.tokens.frames << " m=" << m << " bitrate_bps=" << detail::fmt(f.bitrate_bps())
           << "\n";
    }
    return kOk;
  }

  int cmd_decode(const std::string& ckpt, const std::string& tokens_path, const std::string& output) {
    const auto state = training::load_checkpoint(ckpt);
    const auto& cfg = state.model.config();
    const auto f = read_token_file(tokens_path);
    if (f.codebook_size != cfg.codebook_size) {
      throw ParameterError("token/checkpoint mismatch: K is " + std::to_string(f.codebook_size) +
                           " in the token file, " + std::to_string(cfg.codebook_size) + " in the checkpoint");
    }
    if (f.tokens.layers > cfg.max_layers) {
      throw ParameterError("token/checkpoint mismatch: M is " + std::to_string(f.tokens.layers) +
                           " in the token file, checkpoint has " + std::to_string(cfg.max_layers) + " layers");
    }
    if (static_cast<int>(f.sample_rate) != cfg.sample_rate) {
      throw ParameterError("token/checkpoint mismatch: sample_rate is " + std::to_string(f.sample_rate) +
                           " in the token file, " + std::to_string(cfg.sample_rate) + " in the checkpoint");
    }
    if (cfg.frames_for(f.original_length) != f.tokens.frames) {
      throw ParameterError("token file: T=" + std::to_string(f.tokens.frames) +
                           " does not match original_length=" + std::to_string(f.original_length));
    }
    dsp::save_wav(state.model.decode_tokens(f.tokens, f.original_length), output);
    if (!g_.quiet) out_ << "samples=" << f.original_length << " wrote " << output << "\n";
    return kOk;
  }

  // ABX items from a manifest; wav entries go through the model, .sfea
  // entries are used as representations directly.
  std::vector<eval::ABXItem> abx_items(const std::vector<eval::ManifestEntry>& entries,
                                       const codec::CodecModel* model, eval::Tap tap, int m) {
    std::vector<eval::ABXItem> items;
    for (const auto& e : entries) {
      eval::ABXItem item;
      item.category = e.category;
      item.context = e.context;
      if (e.path.extension() == ".wav") {
        if (!model) throw ParameterError("manifest lists audio; a checkpoint is required");
        const auto wave = dsp::load_wav(e.path);
        const auto feats = detail::features_for(*model, e.path, wave.samples.size(), std::nullopt);
        item.representation =
            eval::representation_dump(*model, wave, feats ? &*feats : nullptr, tap, m);
      } else {
        item.representation = semantic::load_features(e.path).features;
      }
      items.push_back(std::move(item));
    }
    return items;
  }

  int cmd_eval(const std::string& suite, const std::string& ckpt,
               const std::vector<std::string>& compare, const std::string& manifest,
               const std::vector<int>& m_list, const std::string& tap_name,
               const std::string& distance, std::size_t max_triples) {
    std::vector<std::pair<std::string, std::optional<training::TrainingState>>> models;
    if (!compare.empty()) {
      models.emplace_back("baseline", training::load_checkpoint(compare[0], training::TrainMode::baseline));
      models.emplace_back("xcodec", training::load_checkpoint(compare[1], training::TrainMode::xcodec));
    } else if (!ckpt.empty()) {
      models.emplace_back(ckpt, training::load_checkpoint(ckpt));
    } else {
      models.emplace_back("features", std::nullopt);
    }
    if (manifest.empty()) throw ParameterError("eval: --manifest is required");

    if (suite == "abx") {
      eval::ABXOptions opt;
      opt.max_triples = max_triples;
      opt.seed = g_.seed.value_or(0);
      opt.distance = distance == "angular" ? eval::FrameDistance::angular : eval::FrameDistance::euclidean;
      const auto entries = eval::parse_manifest(manifest);
      const auto tap = tap_name == "pre_vq" ? eval::Tap::pre_vq : eval::Tap::post_vq;
      // Layer counts only mean something when a model produces the items.
      const bool layered = tap == eval::Tap::post_vq && models.front().second.has_value();
      const std::vector<int> ms = layered ? m_list : std::vector<int>{0};
      std::map<std::pair<std::string, int>, eval::ABXResult> results;
      out_ << "model        m   within%   across%   triples\n";
      for (auto& [name, state] : models) {
        for (int m : ms) {
          const auto items = abx_items(entries, state ? &state->model : nullptr, tap, m);
          const auto r = eval::abx_evaluate(items, opt);
          results[{name, m}] = r;
          char buf[160];
          std::snprintf(buf, sizeof buf, "%-10s %3d %9.3f %9.3f %9zu\n", name.c_str(), m,
                        r.within_error, r.across_error, r.n_triples);
          out_ << buf;
        }
      }
      for (const auto& [key, r] : results) {
        out_ << "model=" << key.first << " m=" << key.second << " mode=w error=" << detail::fmt(r.within_error)
             << " n=" << r.n_within << "\n";
        out_ << "model=" << key.first << " m=" << key.second << " mode=a error=" << detail::fmt(r.across_error)
             << " n=" << r.n_across << "\n";
      }
      if (!compare.empty()) {
        bool ok = true;
        for (int m : ms) {
          const auto& b = results.at({"baseline", m});
          const auto& x = results.at({"xcodec", m});
          const double dw = x.within_error - b.within_error, da = x.across_error - b.across_error;
          out_ << "compare m=" << m << " delta_within=" << detail::fmt(dw) << " delta_across=" << detail::fmt(da)
               << "\n";
          ok = ok && dw < 0.0 && da < 0.0;
        }
        if (!ok) throw AssertionFailure("X-Codec ABX error is not lower than the baseline in every cell");
        out_ << "compare: X-Codec lower in every cell\n";
      }
      return kOk;
    }

    // recon: the manifest argument names a corpus directory of wav (+ sfea).
    for (auto& [name, state] : models) {
      if (!state) throw ParameterError("eval recon: a checkpoint is required");
      const auto corpus = training::load_corpus_dir(manifest, state->mode());
      std::vector<eval::EvalClip> clips;
      for (const auto& c : corpus.clips) {
        std::optional<semantic::SemanticFeatures> f;
        if (c.features) {
          f = semantic::align_frames(*c.features,
                                     static_cast<long>(state->model.config().frames_for(c.wave.samples.size())));
        }
        clips.push_back({c.name, c.wave, f});
      }
      out_ << "model=" << name << "\n" << eval::format_recon_report(eval::reconstruction_report(state->model, clips, m_list));
    }
    return kOk;
  }

  int cmd_inspect(const std::string& path) {
    const auto bytes = io::read_file(path);
    const std::string magic = bytes.size() >= 4 ? std::string(bytes.data(), 4) : std::string();
    if (magic == "SCTK") {
      const auto f = decode_token_file(bytes, path);
      out_ << "format=SCTK version=" << kSctkVersion << "\nM=" << f.tokens.layers << " T=" << f.tokens.frames
           << " K=" << f.codebook_size << " sample_rate=" << f.sample_rate
           << " original_length=" << f.original_length << " duration_s=" << detail::fmt(f.duration_seconds())
           << " bitrate_bps=" << detail::fmt(f.bitrate_bps()) << "\n";
      return kOk;
    }
    if (magic == "SFEA") {
      const auto f = semantic::decode_features(bytes, path);
      out_ << "format=SFEA version=" << semantic::kSfeaVersion << "\nH_s=" << f.dim() << " T=" << f.frames()
           << " frame_rate=" << detail::fmt(f.frame_rate) << "\n";
      return kOk;
    }
    if (magic == "SCKP") {
      const auto entries = diff::decode_sckp(bytes, path);
      const auto s = training::state_from_entries(entries, path);
      const auto& c = s.model.config();
      out_ << "format=SCKP version=" << diff::kSckpVersion << " entries=" << entries.size() << "\n";
      out_ << "semantic_enabled=" << (c.semantic_enabled ? "true" : "false")
           << " mode=" << training::to_string(s.mode())
           << " gamma=" << (s.gamma ? detail::fmt(*s.gamma) : std::string("unset")) << " step=" << s.step << "\n";
      out_ << "sample_rate=" << c.sample_rate << " H_a=" << c.acoustic_hidden << " H_s=" << c.semantic_dim
           << " semantic_hidden=" << c.semantic_hidden << " H_u=" << c.fused_dim << " K=" << c.codebook_size
           << " M=" << c.max_layers << " base_channels=" << c.base_channels << " kernel=" << c.kernel_size
           << " seed=" << c.seed << "\n";
      std::size_t n_params = 0;
      for (const auto& p : s.model.parameters()) n_params += p.tensor.size();
      out_ << "parameters=" << n_params << " tensors=" << s.model.parameters().size() << "\n";
      out_ << "codebook_perplexity=[";
      const auto& q = s.model.quantizer();
      for (std::size_t l = 0; l < q.layers.size(); ++l) {
        out_ << (l ? "," : "") << detail::fmt(detail::count_perplexity(q.layers[l].ema_counts), "%.4g");
      }
      out_ << "]\n";
      return kOk;
    }
    if (magic == "RIFF") {
      const auto w = dsp::detail::parse_wav(bytes, path);
      out_ << "format=WAV sample_rate=" << w.sample_rate << " samples=" << w.samples.size()
           << " duration_s=" << detail::fmt(w.duration_seconds()) << "\n";
      return kOk;
    }
    throw UnsupportedFormatError(path + ": unknown format (" + std::to_string(bytes.size()) + " bytes)");
  }

  std::ostream& out_;
  std::ostream& err_;
  GlobalOptions g_;
};

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  App app(out, err);
  return app.run(args);
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace xcodec::cli
