// nest/align.hpp

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
#include <vector>

#include "nest/errors.hpp"
#include "nest/masking.hpp"
#include "nest/quantizer.hpp"
#include "nest/signal.hpp"

namespace nest {

// Reconciles the 10 ms input rate with the 80 ms encoder-output rate:
// windows are consecutive non-overlapping groups of `factor` input frames,
// the trailing remainder is dropped (strided-convolution length semantics).
struct AlignConfig {
  size_t factor = 8;
  double threshold = 0.9;  // with factor 8 this selects only fully masked windows
};

struct SelectionMask {
  std::vector<uint8_t> selected;
  std::vector<double> mask_fraction;

  size_t Windows() const { return selected.size(); }
};

inline size_t WindowCount(size_t frames, const AlignConfig &cfg) {
  return frames / cfg.factor;
}

inline SelectionMask DownsampleMask(const MaskSpec &mask,
                                    const AlignConfig &cfg) {
  if (cfg.factor < 1 || !(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) {
    throw InvalidSpecError("align: require factor >= 1 and 0 < threshold <= 1");
  }
  if (mask.Size() < cfg.factor) {
    throw TooShortError("downsample_mask: fewer frames than one window");
  }
  const size_t windows = mask.Size() / cfg.factor;
  SelectionMask sel;
  sel.selected.resize(windows);
  sel.mask_fraction.resize(windows);
  for (size_t w = 0; w < windows; ++w) {
    size_t count = 0;
    for (size_t i = 0; i < cfg.factor; ++i) {
      count += mask.masked[w * cfg.factor + i];
    }
    const double frac =
        static_cast<double>(count) / static_cast<double>(cfg.factor);
    sel.mask_fraction[w] = frac;
    sel.selected[w] = frac >= cfg.threshold ? 1 : 0;
  }
  return sel;
}

// Output-rate targets: the window's `factor` projected vectors are averaged
// before normalization and nearest-neighbor search. Tokens are discrete, so
// "averaging targets" has to act on the vectors they come from; by linearity
// of the frozen projection this equals projecting the averaged mel frames.
inline TokenSequence AlignTargets(const Quantizer &q,
                                  const MelSpectrogram &clean_mel,
                                  const AlignConfig &cfg) {
  if (clean_mel.n_frames < cfg.factor) {
    throw TooShortError("align_targets: fewer frames than one window");
  }
  if (clean_mel.n_mels != q.in_dim) {
    throw DimMismatchError("align_targets: mel dim != quantizer in_dim");
  }
  const size_t windows = clean_mel.n_frames / cfg.factor;
  TokenSequence seq;
  seq.rate = 1000.0 / (clean_mel.hop_ms * static_cast<double>(cfg.factor));
  seq.tokens.reserve(windows);
  std::vector<double> mean(q.code_dim);
  for (size_t w = 0; w < windows; ++w) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (size_t i = 0; i < cfg.factor; ++i) {
      const auto v = ProjectFrame(q, clean_mel.Frame(w * cfg.factor + i));
      for (size_t j = 0; j < q.code_dim; ++j) mean[j] += v[j];
    }
    for (auto &x : mean) x /= static_cast<double>(cfg.factor);
    seq.tokens.push_back(NearestCode(q, mean));
  }
  return seq;
}

inline std::vector<size_t> LossPositions(const SelectionMask &sel) {
  std::vector<size_t> positions;
  for (size_t w = 0; w < sel.selected.size(); ++w) {
    if (sel.selected[w]) positions.push_back(w);
  }
  return positions;
}

}  // namespace nest
