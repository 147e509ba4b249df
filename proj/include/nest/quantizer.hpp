// nest/quantizer.hpp

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
#include <span>
#include <vector>

#include "nest/errors.hpp"
#include "nest/prng.hpp"
#include "nest/signal.hpp"

namespace nest {

// Frozen random-projection quantizer: a fixed linear map of mel frames into
// code space plus a fixed random codebook. Nothing here ever trains; the
// token for a frame is the nearest codebook row. Both matrices are
// reconstructible bit-for-bit from (seed, dims).
struct Quantizer {
  size_t in_dim = 80;
  size_t code_dim = 16;
  size_t vocab = 8192;
  uint64_t seed = 0;
  double norm_eps = 1e-8;
  // Distance on l2-normalized vectors (cosine ranking) by default; set false
  // for plain L2.
  bool cosine = true;

  std::vector<float> projection;  // in_dim x code_dim, row-major
  std::vector<float> codebook;    // vocab x code_dim, row-major

  std::span<const float> Code(size_t k) const {
    return {codebook.data() + k * code_dim, code_dim};
  }
};

// Target token ids; rate is tokens per second (100 at the 10 ms input rate,
// 12.5 after 8x alignment).
struct TokenSequence {
  std::vector<uint32_t> tokens;
  double rate = 100.0;
};

// Entries are i.i.d. standard normal from one xoshiro256** stream seeded by
// splitmix64(seed); fill order is row-major, projection before codebook.
inline Quantizer InitQuantizer(uint64_t seed, size_t in_dim, size_t code_dim,
                               size_t vocab) {
  if (in_dim < 1 || code_dim < 1 || vocab < 1) {
    throw InvalidDimsError("quantizer dims must all be >= 1");
  }
  Quantizer q;
  q.in_dim = in_dim;
  q.code_dim = code_dim;
  q.vocab = vocab;
  q.seed = seed;
  Xoshiro256ss rng(seed);
  q.projection.resize(in_dim * code_dim);
  for (auto &w : q.projection) w = static_cast<float>(rng.Gaussian());
  q.codebook.resize(vocab * code_dim);
  for (auto &w : q.codebook) w = static_cast<float>(rng.Gaussian());
  return q;
}

// v = frame^T * projection, accumulated in double.
inline std::vector<double> ProjectFrame(const Quantizer &q,
                                        std::span<const float> frame) {
  if (frame.size() != q.in_dim) {
    throw DimMismatchError("frame length does not match quantizer in_dim");
  }
  std::vector<double> v(q.code_dim, 0.0);
  for (size_t i = 0; i < q.in_dim; ++i) {
    const double x = frame[i];
    const float *row = q.projection.data() + i * q.code_dim;
    for (size_t j = 0; j < q.code_dim; ++j) v[j] += x * row[j];
  }
  return v;
}

// argmin_k || v/(|v|+eps) - c_k/(|c_k|+eps) ||_2, ties to the smallest index.
inline uint32_t NearestCode(const Quantizer &q, std::span<const double> v) {
  double vnorm = 0.0;
  for (double x : v) vnorm += x * x;
  vnorm = std::sqrt(vnorm);
  const double vscale = q.cosine ? 1.0 / (vnorm + q.norm_eps) : 1.0;

  uint32_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < q.vocab; ++k) {
    const float *c = q.codebook.data() + k * q.code_dim;
    double cscale = 1.0;
    if (q.cosine) {
      double cnorm = 0.0;
      for (size_t j = 0; j < q.code_dim; ++j) {
        cnorm += static_cast<double>(c[j]) * c[j];
      }
      cscale = 1.0 / (std::sqrt(cnorm) + q.norm_eps);
    }
    double dist = 0.0;
    for (size_t j = 0; j < q.code_dim; ++j) {
      const double d = v[j] * vscale - static_cast<double>(c[j]) * cscale;
      dist += d * d;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<uint32_t>(k);
    }
  }
  return best;
}

inline uint32_t QuantizeFrame(const Quantizer &q, std::span<const float> frame) {
  for (float x : frame) {
    if (!std::isfinite(x)) throw InvalidSpecError("non-finite frame entry");
  }
  return NearestCode(q, ProjectFrame(q, frame));
}

inline TokenSequence Quantize(const Quantizer &q, const MelSpectrogram &mel) {
  if (mel.n_frames == 0) throw EmptyInputError("quantize: empty mel");
  TokenSequence seq;
  seq.rate = 1000.0 / mel.hop_ms;
  seq.tokens.reserve(mel.n_frames);
  for (size_t t = 0; t < mel.n_frames; ++t) {
    seq.tokens.push_back(QuantizeFrame(q, mel.Frame(t)));
  }
  return seq;
}

}  // namespace nest
