// nest/masking.hpp

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

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nest/errors.hpp"
#include "nest/prng.hpp"
#include "nest/signal.hpp"

namespace nest {

// Masked frames are replaced by a fill vector; Zero is the only built-in,
// the enum is the extension point for a learned embedding fill.
enum class MaskFill { kZero };

struct MaskConfig {
  double p_m = 0.01;  // per-frame block-start probability
  int l_m = 40;       // block length in frames
  MaskFill fill = MaskFill::kZero;
};

// masked[i] is true iff some start s satisfies s <= i < s + l_m. Overlapping
// blocks merge; blocks clip at the sequence end rather than wrap.
struct MaskSpec {
  std::vector<uint8_t> masked;
  std::vector<size_t> starts;

  size_t Size() const { return masked.size(); }
  size_t CountMasked() const {
    return static_cast<size_t>(std::count(masked.begin(), masked.end(), 1));
  }
};

inline MaskSpec SampleMask(size_t frames, const MaskConfig &cfg,
                           Xoshiro256ss &rng) {
  if (frames < 1) throw EmptyInputError("sample_mask: T must be >= 1");
  if (cfg.p_m < 0.0 || cfg.p_m > 1.0 || cfg.l_m < 1) {
    throw InvalidSpecError("sample_mask: require 0 <= p_m <= 1 and l_m >= 1");
  }
  MaskSpec spec;
  spec.masked.assign(frames, 0);
  for (size_t i = 0; i < frames; ++i) {
    if (rng.Bernoulli(cfg.p_m)) spec.starts.push_back(i);
  }
  for (size_t s : spec.starts) {
    const size_t end = std::min(frames, s + static_cast<size_t>(cfg.l_m));
    std::fill(spec.masked.begin() + s, spec.masked.begin() + end, 1);
  }
  return spec;
}

// Unmasked frames are copied bit-for-bit; masked frames become the fill.
inline MelSpectrogram ApplyMask(const MelSpectrogram &mel, const MaskSpec &spec,
                                const MaskConfig &cfg) {
  if (spec.Size() != mel.n_frames) {
    throw LengthMismatchError("apply_mask: mask length != mel frame count");
  }
  (void)cfg;  // only MaskFill::kZero exists
  MelSpectrogram out = mel;
  for (size_t t = 0; t < mel.n_frames; ++t) {
    if (spec.masked[t]) {
      auto frame = out.Frame(t);
      std::fill(frame.begin(), frame.end(), 0.0f);
    }
  }
  return out;
}

}  // namespace nest
