// nest/config.hpp

// Copyright 2026  nest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "nest/align.hpp"
#include "nest/augment.hpp"
#include "nest/errors.hpp"
#include "nest/masking.hpp"
#include "nest/model.hpp"
#include "nest/optim.hpp"
#include "nest/signal.hpp"
#include "nest/toml.hpp"

namespace nest {

struct QuantizerConfig {
  uint64_t seed = 42;
  size_t in_dim = 80;
  size_t code_dim = 16;
  size_t vocab = 8192;
  bool cosine = true;
  double norm_eps = 1e-8;
};

struct PathsConfig {
  std::string manifest;
  std::string noise_dir;
  std::string out_dir = "out";
};

// One document holding every knob of the pipeline. Batch/step/warmup counts
// default to desk scale; every other knob keeps its standard recipe value.
struct RunConfig {
  MelConfig mel;
  MaskConfig mask;
  AugmentConfig augment;
  AlignConfig align;
  EncoderConfig encoder;
  TrainConfig train;
  QuantizerConfig quantizer;
  PathsConfig paths;
};

// Every violated constraint, empty when valid. Cross-field rules live here
// so a bad config dies before any work starts.
inline std::vector<std::string> ValidateRunConfig(const RunConfig &cfg) {
  std::vector<std::string> v;
  auto check = [&v](bool ok, const std::string &msg) {
    if (!ok) v.push_back(msg);
  };

  const auto &m = cfg.mel;
  check(m.n_fft > 0 && (m.n_fft & (m.n_fft - 1)) == 0,
        "mel.n_fft must be a positive power of two");
  check(m.win_length > 0 && m.win_length <= m.n_fft,
        "mel.win_length must be in (0, mel.n_fft]");
  check(m.hop_length > 0, "mel.hop_length must be positive");
  check(m.hop_length * 8 == kSampleRate * 80 / 1000,
        "mel.hop_length x 8 must equal 80 ms at 16 kHz (hop 160)");
  check(m.n_mels >= 1, "mel.n_mels must be >= 1");
  check(m.log_floor > 0.0, "mel.log_floor must be > 0");
  check(m.fmin >= 0.0 && m.fmax > m.fmin && m.fmax <= kSampleRate / 2.0,
        "mel requires 0 <= fmin < fmax <= 8000");

  check(cfg.mask.p_m >= 0.0 && cfg.mask.p_m <= 1.0,
        "mask.p_m must be in [0, 1]");
  check(cfg.mask.l_m >= 1, "mask.l_m must be >= 1");

  const auto &a = cfg.augment;
  check(a.p_aug >= 0.0 && a.p_aug <= 1.0, "augment.p_aug must be in [0, 1]");
  check(std::abs(a.p_noise + a.p_speech - 1.0) <= 1e-9,
        "augment.p_noise + augment.p_speech must equal 1");
  check(a.ratio_min >= 0.0 && a.ratio_min <= a.ratio_max && a.ratio_max <= 1.0,
        "augment requires 0 <= ratio_min <= ratio_max <= 1");
  check(a.max_segments >= 1, "augment.max_segments must be >= 1");
  check(a.snr_db_min <= a.snr_db_max,
        "augment.snr_db_min must be <= augment.snr_db_max");

  check(cfg.align.factor >= 1, "align.factor must be >= 1");
  check(cfg.align.threshold > 0.0 && cfg.align.threshold <= 1.0,
        "align.threshold must be in (0, 1]");

  const auto &e = cfg.encoder;
  check(e.d_model >= 1, "encoder.d_model must be >= 1");
  check(e.conv_kernel >= 1, "encoder.conv_kernel must be >= 1");
  check(!e.conv_strides.empty(), "encoder.conv_strides must be non-empty");
  bool strides_ok = !e.conv_strides.empty();
  for (size_t s : e.conv_strides) strides_ok = strides_ok && s >= 1;
  check(strides_ok, "encoder.conv_strides entries must be >= 1");
  if (strides_ok) {
    check(e.SubsampleFactor() == cfg.align.factor,
          "encoder.conv_strides product must equal align.factor");
  }
  check(e.vocab == cfg.quantizer.vocab,
        "encoder.vocab must equal quantizer.vocab");
  check(e.n_mels == static_cast<size_t>(m.n_mels),
        "encoder.n_mels must equal mel.n_mels");
  check(e.max_positions >= 1, "encoder.max_positions must be >= 1");

  const auto &t = cfg.train;
  check(t.batch_size >= 1, "train.batch_size must be >= 1");
  check(t.total_steps >= 1, "train.total_steps must be >= 1");
  check(t.warmup_steps >= 1, "train.warmup_steps must be >= 1");
  check(t.peak_lr > 0.0, "train.peak_lr must be > 0");
  check(t.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  check(t.grad_clip_norm > 0.0, "train.grad_clip_norm must be > 0");
  check(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0,
        "train.adam_beta1 must be in [0, 1)");
  check(t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0,
        "train.adam_beta2 must be in [0, 1)");
  check(t.adam_eps > 0.0, "train.adam_eps must be > 0");
  check(t.ckpt_every >= 1, "train.ckpt_every must be >= 1");

  const auto &q = cfg.quantizer;
  check(q.in_dim >= 1 && q.code_dim >= 1 && q.vocab >= 1,
        "quantizer dims must all be >= 1");
  check(q.in_dim == static_cast<size_t>(m.n_mels),
        "quantizer.in_dim must equal mel.n_mels");
  check(q.norm_eps > 0.0, "quantizer.norm_eps must be > 0");

  return v;
}

inline void ValidateOrThrow(const RunConfig &cfg) {
  auto v = ValidateRunConfig(cfg);
  if (!v.empty()) throw ConfigValidationError(std::move(v));
}

namespace detail {

struct ConfigReader {
  const toml::Document &doc;
  std::vector<std::string> errors;
  std::map<std::string, std::vector<std::string>> known;

  void Key(const std::string &table, const std::string &key) {
    known[table].push_back(key);
  }

  template <typename T, typename F>
  void Read(const std::string &table, const std::string &key, T &out, F get) {
    Key(table, key);
    const toml::Value *v = doc.Find(table, key);
    if (v == nullptr) return;
    try {
      out = get(*v);
    } catch (const toml::ParseError &e) {
      errors.push_back(table + "." + key + ": " + e.what());
    }
  }

  void F64(const std::string &t, const std::string &k, double &out) {
    Read(t, k, out, [](const toml::Value &v) { return v.AsFloat(); });
  }
  void I32(const std::string &t, const std::string &k, int &out) {
    Read(t, k, out,
         [](const toml::Value &v) { return static_cast<int>(v.AsInt()); });
  }
  void U64(const std::string &t, const std::string &k, uint64_t &out) {
    Read(t, k, out, [](const toml::Value &v) {
      return static_cast<uint64_t>(v.AsInt());
    });
  }
  void Sz(const std::string &t, const std::string &k, size_t &out) {
    Read(t, k, out, [](const toml::Value &v) {
      if (v.AsInt() < 0) throw toml::ParseError("must be non-negative");
      return static_cast<size_t>(v.AsInt());
    });
  }
  void Bool(const std::string &t, const std::string &k, bool &out) {
    Read(t, k, out, [](const toml::Value &v) { return v.AsBool(); });
  }
  void Str(const std::string &t, const std::string &k, std::string &out) {
    Read(t, k, out, [](const toml::Value &v) { return v.AsString(); });
  }

  // Reject anything the schema does not know; a typo in a knob must be an
  // error, not a silently ignored default.
  void CheckUnknown() {
    for (const auto &[table, kv] : doc.tables) {
      auto it = known.find(table);
      if (it == known.end()) {
        errors.push_back(table.empty() ? "config keys must live in a table"
                                       : "unknown config table [" + table +
                                             "]");
        continue;
      }
      for (const auto &[key, value] : kv) {
        if (std::find(it->second.begin(), it->second.end(), key) ==
            it->second.end()) {
          errors.push_back("unknown config key " + table + "." + key);
        }
      }
    }
  }
};

}  // namespace detail

// Defaults overlaid with the TOML file. Unknown tables/keys and type errors
// are all collected and reported together.
inline RunConfig RunConfigFromToml(const toml::Document &doc) {
  RunConfig cfg;
  detail::ConfigReader r{doc, {}, {}};

  r.I32("mel", "n_fft", cfg.mel.n_fft);
  r.I32("mel", "win_length", cfg.mel.win_length);
  r.I32("mel", "hop_length", cfg.mel.hop_length);
  r.I32("mel", "n_mels", cfg.mel.n_mels);
  r.F64("mel", "fmin", cfg.mel.fmin);
  r.F64("mel", "fmax", cfg.mel.fmax);
  r.F64("mel", "log_floor", cfg.mel.log_floor);

  r.F64("mask", "p_m", cfg.mask.p_m);
  r.I32("mask", "l_m", cfg.mask.l_m);
  {
    std::string fill = "zero";
    r.Str("mask", "fill", fill);
    if (fill == "zero") {
      cfg.mask.fill = MaskFill::kZero;
    } else {
      r.errors.push_back("mask.fill: unsupported fill '" + fill + "'");
    }
  }

  r.F64("augment", "p_aug", cfg.augment.p_aug);
  r.F64("augment", "p_noise", cfg.augment.p_noise);
  r.F64("augment", "p_speech", cfg.augment.p_speech);
  r.F64("augment", "ratio_min", cfg.augment.ratio_min);
  r.F64("augment", "ratio_max", cfg.augment.ratio_max);
  r.I32("augment", "max_segments", cfg.augment.max_segments);
  r.F64("augment", "snr_db_min", cfg.augment.snr_db_min);
  r.F64("augment", "snr_db_max", cfg.augment.snr_db_max);

  r.Sz("align", "factor", cfg.align.factor);
  r.F64("align", "threshold", cfg.align.threshold);

  r.Sz("encoder", "d_model", cfg.encoder.d_model);
  r.Sz("encoder", "n_blocks", cfg.encoder.n_blocks);
  {
    std::string kind = "ffn";
    r.Str("encoder", "block_kind", kind);
    if (kind == "ffn") {
      cfg.encoder.block_kind = EncoderConfig::BlockKind::kFfn;
    } else if (kind == "attention_ffn") {
      cfg.encoder.block_kind = EncoderConfig::BlockKind::kAttentionFfn;
    } else {
      r.errors.push_back("encoder.block_kind: must be ffn or attention_ffn");
    }
  }
  r.Sz("encoder", "vocab", cfg.encoder.vocab);
  r.Sz("encoder", "conv_kernel", cfg.encoder.conv_kernel);
  {
    r.Key("encoder", "conv_strides");
    if (const toml::Value *v = doc.Find("encoder", "conv_strides")) {
      try {
        if (v->kind != toml::Value::Kind::kArray) {
          throw toml::ParseError("expected an array");
        }
        std::vector<size_t> strides;
        for (const auto &e : v->array) {
          strides.push_back(static_cast<size_t>(e.AsInt()));
        }
        cfg.encoder.conv_strides = std::move(strides);
      } catch (const toml::ParseError &e) {
        r.errors.push_back(std::string("encoder.conv_strides: ") + e.what());
      }
    }
  }
  r.Sz("encoder", "n_mels", cfg.encoder.n_mels);
  r.Sz("encoder", "max_positions", cfg.encoder.max_positions);

  r.Sz("train", "batch_size", cfg.train.batch_size);
  r.Sz("train", "total_steps", cfg.train.total_steps);
  r.Sz("train", "warmup_steps", cfg.train.warmup_steps);
  r.F64("train", "peak_lr", cfg.train.peak_lr);
  r.F64("train", "weight_decay", cfg.train.weight_decay);
  r.F64("train", "grad_clip_norm", cfg.train.grad_clip_norm);
  r.F64("train", "adam_beta1", cfg.train.adam_beta1);
  r.F64("train", "adam_beta2", cfg.train.adam_beta2);
  r.F64("train", "adam_eps", cfg.train.adam_eps);
  r.U64("train", "seed", cfg.train.seed);
  r.Sz("train", "ckpt_every", cfg.train.ckpt_every);

  r.U64("quantizer", "seed", cfg.quantizer.seed);
  r.Sz("quantizer", "in_dim", cfg.quantizer.in_dim);
  r.Sz("quantizer", "code_dim", cfg.quantizer.code_dim);
  r.Sz("quantizer", "vocab", cfg.quantizer.vocab);
  r.Bool("quantizer", "cosine", cfg.quantizer.cosine);
  r.F64("quantizer", "norm_eps", cfg.quantizer.norm_eps);

  r.Str("paths", "manifest", cfg.paths.manifest);
  r.Str("paths", "noise_dir", cfg.paths.noise_dir);
  r.Str("paths", "out_dir", cfg.paths.out_dir);

  r.CheckUnknown();
  if (!r.errors.empty()) throw ConfigValidationError(std::move(r.errors));
  return cfg;
}

inline RunConfig LoadRunConfig(const std::filesystem::path &path) {
  return RunConfigFromToml(toml::ParseFile(path));
}

namespace detail {

// TOML float literal: always carries a '.' or exponent so it parses back as
// a float, not an integer.
inline std::string TomlFloat(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  std::string s = o.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

// Serialized form with every knob explicit; LoadRunConfig(ToToml(cfg))
// round-trips.
inline std::string ToToml(const RunConfig &cfg) {
  auto tf = detail::TomlFloat;
  std::ostringstream o;
  o << "[mel]\n"
    << "n_fft = " << cfg.mel.n_fft << "\n"
    << "win_length = " << cfg.mel.win_length << "\n"
    << "hop_length = " << cfg.mel.hop_length << "\n"
    << "n_mels = " << cfg.mel.n_mels << "\n"
    << "fmin = " << tf(cfg.mel.fmin) << "\n"
    << "fmax = " << tf(cfg.mel.fmax) << "\n"
    << "log_floor = " << tf(cfg.mel.log_floor) << "\n\n";
  o << "[mask]\n"
    << "p_m = " << tf(cfg.mask.p_m) << "\n"
    << "l_m = " << cfg.mask.l_m << "\n"
    << "fill = \"zero\"\n\n";
  o << "[augment]\n"
    << "p_aug = " << tf(cfg.augment.p_aug) << "\n"
    << "p_noise = " << tf(cfg.augment.p_noise) << "\n"
    << "p_speech = " << tf(cfg.augment.p_speech) << "\n"
    << "ratio_min = " << tf(cfg.augment.ratio_min) << "\n"
    << "ratio_max = " << tf(cfg.augment.ratio_max) << "\n"
    << "max_segments = " << cfg.augment.max_segments << "\n"
    << "snr_db_min = " << tf(cfg.augment.snr_db_min) << "\n"
    << "snr_db_max = " << tf(cfg.augment.snr_db_max) << "\n\n";
  o << "[align]\n"
    << "factor = " << cfg.align.factor << "\n"
    << "threshold = " << tf(cfg.align.threshold) << "\n\n";
  o << "[encoder]\n"
    << "d_model = " << cfg.encoder.d_model << "\n"
    << "n_blocks = " << cfg.encoder.n_blocks << "\n"
    << "block_kind = \""
    << (cfg.encoder.block_kind == EncoderConfig::BlockKind::kFfn
            ? "ffn"
            : "attention_ffn")
    << "\"\n"
    << "vocab = " << cfg.encoder.vocab << "\n"
    << "conv_kernel = " << cfg.encoder.conv_kernel << "\n"
    << "conv_strides = [";
  for (size_t i = 0; i < cfg.encoder.conv_strides.size(); ++i) {
    o << (i > 0 ? ", " : "") << cfg.encoder.conv_strides[i];
  }
  o << "]\n"
    << "n_mels = " << cfg.encoder.n_mels << "\n"
    << "max_positions = " << cfg.encoder.max_positions << "\n\n";
  o << "[train]\n"
    << "batch_size = " << cfg.train.batch_size << "\n"
    << "total_steps = " << cfg.train.total_steps << "\n"
    << "warmup_steps = " << cfg.train.warmup_steps << "\n"
    << "peak_lr = " << tf(cfg.train.peak_lr) << "\n"
    << "weight_decay = " << tf(cfg.train.weight_decay) << "\n"
    << "grad_clip_norm = " << tf(cfg.train.grad_clip_norm) << "\n"
    << "adam_beta1 = " << tf(cfg.train.adam_beta1) << "\n"
    << "adam_beta2 = " << tf(cfg.train.adam_beta2) << "\n"
    << "adam_eps = " << tf(cfg.train.adam_eps) << "\n"
    << "seed = " << cfg.train.seed << "\n"
    << "ckpt_every = " << cfg.train.ckpt_every << "\n\n";
  o << "[quantizer]\n"
    << "seed = " << cfg.quantizer.seed << "\n"
    << "in_dim = " << cfg.quantizer.in_dim << "\n"
    << "code_dim = " << cfg.quantizer.code_dim << "\n"
    << "vocab = " << cfg.quantizer.vocab << "\n"
    << "cosine = " << (cfg.quantizer.cosine ? "true" : "false") << "\n"
    << "norm_eps = " << tf(cfg.quantizer.norm_eps) << "\n\n";
  o << "[paths]\n"
    << "manifest = \"" << cfg.paths.manifest << "\"\n"
    << "noise_dir = \"" << cfg.paths.noise_dir << "\"\n"
    << "out_dir = \"" << cfg.paths.out_dir << "\"\n";
  return o.str();
}

// FNV-1a over a canonical rendering of every field that shapes the per-step
// trajectory; resuming checks this, so a resumed run cannot silently continue
// under a different config. Run control (total_steps, ckpt_every, paths) is
// deliberately excluded: training longer or shorter is not a config change.
inline uint64_t ConfigHash(const RunConfig &cfg) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << cfg.mel.n_fft << '|' << cfg.mel.win_length << '|' << cfg.mel.hop_length
    << '|' << cfg.mel.n_mels << '|' << cfg.mel.fmin << '|' << cfg.mel.fmax
    << '|' << cfg.mel.log_floor << '|' << cfg.mask.p_m << '|' << cfg.mask.l_m
    << '|' << static_cast<int>(cfg.mask.fill) << '|' << cfg.augment.p_aug
    << '|' << cfg.augment.p_noise << '|' << cfg.augment.p_speech << '|'
    << cfg.augment.ratio_min << '|' << cfg.augment.ratio_max << '|'
    << cfg.augment.max_segments << '|' << cfg.augment.snr_db_min << '|'
    << cfg.augment.snr_db_max << '|' << cfg.align.factor << '|'
    << cfg.align.threshold << '|' << cfg.encoder.d_model << '|'
    << cfg.encoder.n_blocks << '|' << static_cast<int>(cfg.encoder.block_kind)
    << '|' << cfg.encoder.vocab << '|' << cfg.encoder.conv_kernel << '|';
  for (size_t s : cfg.encoder.conv_strides) o << s << ',';
  o << '|' << cfg.encoder.n_mels << '|' << cfg.encoder.max_positions << '|'
    << cfg.train.batch_size << '|'
    << cfg.train.warmup_steps << '|' << cfg.train.peak_lr << '|'
    << cfg.train.weight_decay << '|' << cfg.train.grad_clip_norm << '|'
    << cfg.train.adam_beta1 << '|' << cfg.train.adam_beta2 << '|'
    << cfg.train.adam_eps << '|' << cfg.train.seed << '|'
    << cfg.quantizer.seed << '|' << cfg.quantizer.in_dim << '|'
    << cfg.quantizer.code_dim << '|' << cfg.quantizer.vocab << '|'
    << cfg.quantizer.cosine << '|' << cfg.quantizer.norm_eps;
  const std::string s = o.str();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nest
