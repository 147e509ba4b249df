// nest/model.hpp

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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nest/align.hpp"
#include "nest/errors.hpp"
#include "nest/prng.hpp"
#include "nest/quantizer.hpp"
#include "nest/signal.hpp"
#include "nest/tape.hpp"

namespace nest {

// A deliberate miniature of the target encoder family: 3 strided 1-D
// convolutions with GELU (the 8x sub-sampler), a sinusoidal position table,
// pre-norm residual blocks (FFN-only by default, optionally a single-head
// self-attention in front of the FFN), then a linear token head. The pipeline
// contracts under test live in the lengths: output rows == floor(T/8),
// matching the align module by construction.
struct EncoderConfig {
  enum class BlockKind { kFfn, kAttentionFfn };

  size_t d_model = 64;
  size_t n_blocks = 2;
  BlockKind block_kind = BlockKind::kFfn;
  size_t vocab = 8192;
  size_t conv_kernel = 5;
  std::vector<size_t> conv_strides{2, 2, 2};
  size_t n_mels = 80;
  size_t max_positions = 4096;

  size_t DFf() const { return 4 * d_model; }

  size_t SubsampleFactor() const {
    size_t f = 1;
    for (size_t s : conv_strides) f *= s;
    return f;
  }

  // Frames the conv stack can see from one output position.
  size_t ReceptiveField() const {
    size_t rf = 1, jump = 1;
    for (size_t s : conv_strides) {
      rf += (conv_kernel - 1) * jump;
      jump *= s;
    }
    return rf;
  }
};

namespace detail {

inline void FillSinusoidal(ParamTensor &pos) {
  const size_t rows = pos.shape[0], cols = pos.shape[1];
  for (size_t p = 0; p < rows; ++p) {
    for (size_t c = 0; c < cols; ++c) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(c / 2 * 2) /
                                static_cast<double>(cols));
      const double angle = static_cast<double>(p) * rate;
      pos.v[p * cols + c] =
          static_cast<float>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
}

}  // namespace detail

// Parameter names are the checkpoint contract: enc.conv{0,1,2}.{w,b},
// enc.pos, enc.block{i}.norm1.{scale,offset} [+ attn.{wq,wk,wv,wo},
// norm2.{scale,offset}], enc.block{i}.ffn.{w1,b1,w2,b2},
// enc.norm_out.{scale,offset}, head.{w,b}.
inline NamedParams InitEncoderParams(const EncoderConfig &cfg, uint64_t seed) {
  NamedParams params;
  Xoshiro256ss rng = DeriveStream(seed, StreamTag::kInit);

  auto gauss = [&](const std::string &name, std::vector<size_t> shape,
                   double sigma, bool decay) {
    ParamTensor p;
    p.shape = std::move(shape);
    size_t n = 1;
    for (size_t s : p.shape) n *= s;
    p.v.resize(n);
    for (auto &w : p.v) w = static_cast<float>(sigma * rng.Gaussian());
    p.decay = decay;
    params.emplace(name, std::move(p));
  };
  auto constant = [&](const std::string &name, std::vector<size_t> shape,
                      float value) {
    ParamTensor p;
    p.shape = std::move(shape);
    size_t n = 1;
    for (size_t s : p.shape) n *= s;
    p.v.assign(n, value);
    p.decay = false;
    params.emplace(name, std::move(p));
  };

  const size_t d = cfg.d_model, k = cfg.conv_kernel;
  size_t c_in = cfg.n_mels;
  for (size_t l = 0; l < cfg.conv_strides.size(); ++l) {
    const std::string base = "enc.conv" + std::to_string(l);
    gauss(base + ".w", {d, c_in, k},
          1.0 / std::sqrt(static_cast<double>(c_in * k)), true);
    constant(base + ".b", {d}, 0.0f);
    c_in = d;
  }

  {
    ParamTensor pos;
    pos.shape = {cfg.max_positions, d};
    pos.v.resize(cfg.max_positions * d);
    pos.trainable = false;
    pos.decay = false;
    detail::FillSinusoidal(pos);
    params.emplace("enc.pos", std::move(pos));
  }

  for (size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string base = "enc.block" + std::to_string(i);
    constant(base + ".norm1.scale", {d}, 1.0f);
    constant(base + ".norm1.offset", {d}, 0.0f);
    if (cfg.block_kind == EncoderConfig::BlockKind::kAttentionFfn) {
      const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
      gauss(base + ".attn.wq", {d, d}, sigma, true);
      gauss(base + ".attn.wk", {d, d}, sigma, true);
      gauss(base + ".attn.wv", {d, d}, sigma, true);
      gauss(base + ".attn.wo", {d, d}, sigma, true);
      constant(base + ".norm2.scale", {d}, 1.0f);
      constant(base + ".norm2.offset", {d}, 0.0f);
    }
    gauss(base + ".ffn.w1", {d, cfg.DFf()},
          1.0 / std::sqrt(static_cast<double>(d)), true);
    constant(base + ".ffn.b1", {cfg.DFf()}, 0.0f);
    gauss(base + ".ffn.w2", {cfg.DFf(), d},
          1.0 / std::sqrt(static_cast<double>(cfg.DFf())), true);
    constant(base + ".ffn.b2", {d}, 0.0f);
  }

  constant("enc.norm_out.scale", {d}, 1.0f);
  constant("enc.norm_out.offset", {d}, 0.0f);
  gauss("head.w", {d, cfg.vocab}, 1.0 / std::sqrt(static_cast<double>(d)),
        true);
  constant("head.b", {cfg.vocab}, 0.0f);
  return params;
}

// Runs the encoder on one utterance, recording everything on `tape`.
// Returns the logits node (floor(T/8) x vocab).
inline size_t EncoderForward(Tape &tape, NamedParams &params,
                             const MelSpectrogram &mel,
                             const EncoderConfig &cfg) {
  if (mel.n_mels != cfg.n_mels) {
    throw DimMismatchError("encoder: mel dim != configured n_mels");
  }
  if (mel.n_frames < cfg.ReceptiveField()) {
    throw TooShortError("encoder: input shorter than the conv receptive field");
  }
  const size_t windows = mel.n_frames / cfg.SubsampleFactor();
  if (windows > cfg.max_positions) {
    throw InvalidSpecError("encoder: input exceeds max_positions");
  }

  size_t x = tape.InputRows(mel.data, mel.n_frames, mel.n_mels);
  for (size_t l = 0; l < cfg.conv_strides.size(); ++l) {
    const std::string base = "enc.conv" + std::to_string(l);
    const size_t stride = cfg.conv_strides[l];
    const size_t pad_left =
        cfg.conv_kernel >= stride ? (cfg.conv_kernel - stride) / 2 : 0;
    x = tape.Conv1d(x, params.at(base + ".w"), params.at(base + ".b"), stride,
                    pad_left);
    x = tape.Gelu(x);
  }
  x = tape.AddRows(x, params.at("enc.pos"));

  for (size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string base = "enc.block" + std::to_string(i);
    if (cfg.block_kind == EncoderConfig::BlockKind::kAttentionFfn) {
      size_t y = tape.LayerNorm(x, params.at(base + ".norm1.scale"),
                                params.at(base + ".norm1.offset"));
      const size_t q = tape.Linear(y, params.at(base + ".attn.wq"));
      const size_t k = tape.Linear(y, params.at(base + ".attn.wk"));
      const size_t v = tape.Linear(y, params.at(base + ".attn.wv"));
      size_t scores = tape.MatmulNT(q, k);
      scores =
          tape.Scale(scores, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
      const size_t attn = tape.MatmulNN(tape.SoftmaxRows(scores), v);
      x = tape.Add(x, tape.Linear(attn, params.at(base + ".attn.wo")));
      y = tape.LayerNorm(x, params.at(base + ".norm2.scale"),
                         params.at(base + ".norm2.offset"));
      size_t h = tape.Linear(y, params.at(base + ".ffn.w1"),
                             &params.at(base + ".ffn.b1"));
      h = tape.Gelu(h);
      h = tape.Linear(h, params.at(base + ".ffn.w2"),
                      &params.at(base + ".ffn.b2"));
      x = tape.Add(x, h);
    } else {
      size_t y = tape.LayerNorm(x, params.at(base + ".norm1.scale"),
                                params.at(base + ".norm1.offset"));
      size_t h = tape.Linear(y, params.at(base + ".ffn.w1"),
                             &params.at(base + ".ffn.b1"));
      h = tape.Gelu(h);
      h = tape.Linear(h, params.at(base + ".ffn.w2"),
                      &params.at(base + ".ffn.b2"));
      x = tape.Add(x, h);
    }
  }

  x = tape.LayerNorm(x, params.at("enc.norm_out.scale"),
                     params.at("enc.norm_out.offset"));
  return tape.Linear(x, params.at("head.w"), &params.at("head.b"));
}

struct LossResult {
  bool skipped = false;  // no selected windows; no loss node exists
  size_t node = 0;
  double loss = 0.0;
  size_t correct = 0;
  size_t count = 0;
};

// Mean cross entropy over the selected windows; empty selection is reported,
// not silently turned into a zero-loss update.
inline LossResult MaskedCeLoss(Tape &tape, size_t logits_node,
                               const TokenSequence &targets,
                               const std::vector<size_t> &positions) {
  LossResult r;
  r.count = positions.size();
  if (positions.empty()) {
    r.skipped = true;
    return r;
  }
  const auto out = tape.MaskedCe(logits_node, targets.tokens, positions);
  r.node = out.node;
  r.loss = out.loss;
  r.correct = out.correct;
  return r;
}

// A sampled coordinate is auditable only if it carries gradient signal the
// difference quotient can actually resolve: the extrapolated estimator below
// is good to ~1e-10 absolute at eps = 1e-3, so against the 1e-4 relative bar
// anything under 1e-5 is measurement noise, not information. Such
// coordinates (dead GELU regions, padding-fringe conv taps) are skipped and
// redrawn.
constexpr double kGradAuditFloor = 1e-5;

// Finite-difference audit of the tape gradients. Coordinates are sampled
// uniformly over the flat index space of trainable parameters; the loss is
// re-evaluated with the probed coordinate shifted in double, so probes are
// not quantized to float32. The numeric side is Richardson-extrapolated
// central differences (steps eps and 2*eps), killing the O(eps^2) truncation
// term that would otherwise swamp small-magnitude gradients.
// `corrupt_scale_tensor`, when set, doubles that tensor's analytic gradient
// before comparing; the returned error must then blow up well past any
// honest tolerance.
inline double GradCheck(NamedParams &params, const EncoderConfig &cfg,
                        const MelSpectrogram &mel, const TokenSequence &targets,
                        const std::vector<size_t> &positions, double eps,
                        size_t n_coords, uint64_t seed,
                        const std::string *corrupt_scale_tensor = nullptr) {
  if (!(eps > 0.0)) throw InvalidSpecError("grad_check: eps must be > 0");
  if (positions.empty()) {
    throw InvalidSpecError("grad_check: need at least one loss position");
  }

  ZeroGrads(params);
  {
    Tape tape;
    const size_t logits = EncoderForward(tape, params, mel, cfg);
    const auto ce = tape.MaskedCe(logits, targets.tokens, positions);
    tape.Backward(ce.node);
  }

  std::vector<std::pair<const std::string *, ParamTensor *>> trainable;
  size_t total = 0;
  for (auto &[name, p] : params) {
    if (p.trainable) {
      trainable.emplace_back(&name, &p);
      total += p.Size();
    }
  }

  auto loss_with = [&](ParamTensor *t, size_t idx, double delta) {
    Tape tape;
    tape.SetOverride(t, idx, delta);
    const size_t logits = EncoderForward(tape, params, mel, cfg);
    const auto ce = tape.MaskedCe(logits, targets.tokens, positions);
    return ce.loss;
  };

  Xoshiro256ss rng = DeriveStream(seed, StreamTag::kGradCheck);
  double max_rel = 0.0;
  size_t audited = 0;
  const size_t max_draws = 40 * n_coords;
  for (size_t draw = 0; audited < n_coords && draw < max_draws; ++draw) {
    size_t flat = rng.Below(total);
    const std::string *name = nullptr;
    ParamTensor *tensor = nullptr;
    for (auto &[n, p] : trainable) {
      if (flat < p->Size()) {
        name = n;
        tensor = p;
        break;
      }
      flat -= p->Size();
    }
    const double d1 =
        (loss_with(tensor, flat, eps) - loss_with(tensor, flat, -eps)) /
        (2.0 * eps);
    const double d2 = (loss_with(tensor, flat, 2.0 * eps) -
                       loss_with(tensor, flat, -2.0 * eps)) /
                      (4.0 * eps);
    const double numeric = (4.0 * d1 - d2) / 3.0;
    double analytic = tensor->g[flat];
    if (std::max(std::abs(analytic), std::abs(numeric)) < kGradAuditFloor) {
      continue;
    }
    ++audited;
    if (corrupt_scale_tensor != nullptr && *name == *corrupt_scale_tensor) {
      analytic *= 2.0;
    }
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    max_rel = std::max(max_rel, rel);
  }
  if (audited == 0) {
    throw InvalidSpecError("grad_check: no auditable coordinates found");
  }
  return max_rel;
}

}  // namespace nest
