// nest/optim.hpp

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
#include <map>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/tape.hpp"

namespace nest {

struct TrainConfig {
  size_t batch_size = 8;      // full scale: 2048
  size_t total_steps = 2000;  // full scale: 80000
  size_t warmup_steps = 250;  // full scale: 25000
  double peak_lr = 0.004;
  double weight_decay = 1e-3;
  double grad_clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  size_t ckpt_every = 500;
};

// Noam schedule parameterized by its peak: linear warmup to peak_lr at
// step == warmup_steps, inverse-sqrt decay after (the classical d_model^-0.5
// base factor is absorbed into peak_lr).
inline double NoamLr(size_t step, const TrainConfig &cfg) {
  if (step < 1) throw InvalidSpecError("noam_lr: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.peak_lr * std::min(s / w, std::sqrt(w / s));
}

// Global-norm clip over trainable gradients; returns the pre-clip norm.
inline double ClipGradients(NamedParams &params, double max_norm) {
  double sq = 0.0;
  for (const auto &[name, p] : params) {
    if (!p.trainable) continue;
    for (double g : p.g) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto &[name, p] : params) {
      if (!p.trainable) continue;
      for (auto &g : p.g) g *= scale;
    }
  }
  return norm;
}

// First/second moments, float32 like the parameters so checkpoints
// round-trip bitwise.
struct AdamState {
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;

  static AdamState For(const NamedParams &params) {
    AdamState st;
    for (const auto &[name, p] : params) {
      if (!p.trainable) continue;
      st.m[name] = std::vector<float>(p.Size(), 0.0f);
      st.v[name] = std::vector<float>(p.Size(), 0.0f);
    }
    return st;
  }
};

// Decoupled-weight-decay adaptive-moment update (bias-corrected). Decay only
// touches tensors flagged `decay`, so a zero-gradient step leaves biases and
// norm terms bitwise unchanged. All arithmetic runs in double and rounds to
// float32 at the end, keeping the stored state exactly reproducible.
inline void AdamWStep(NamedParams &params, AdamState &st, size_t step,
                      double lr, const TrainConfig &cfg) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (auto &[name, p] : params) {
    if (!p.trainable) continue;
    auto &m = st.m.at(name);
    auto &v = st.v.at(name);
    for (size_t i = 0; i < p.Size(); ++i) {
      const double g = p.g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg.adam_eps);
      if (p.decay) update += cfg.weight_decay * p.v[i];
      p.v[i] = static_cast<float>(p.v[i] - lr * update);
    }
  }
}

}  // namespace nest
