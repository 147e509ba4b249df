// nest/augment.hpp

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
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/prng.hpp"
#include "nest/signal.hpp"

namespace nest {

// Generalized noisy-speech augmentation: with probability p_aug an utterance
// receives 1..max_segments non-overlapping segments of noise or other-speaker
// speech, totalling ratio_min..ratio_max of its length, mixed at a per-segment
// SNR. An augmented utterance is either a noise plan or a speech plan
// (probabilities p_noise / p_speech); speech plans pick a speaker per segment.
struct AugmentConfig {
  double p_aug = 0.2;
  double p_noise = 0.1;
  double p_speech = 0.9;
  double ratio_min = 0.4;
  double ratio_max = 0.6;
  int max_segments = 3;
  double snr_db_min = -5.0;
  double snr_db_max = 20.0;
};

enum class SourceKind { kNoise, kSpeaker };

struct AugmentSegment {
  size_t primary_start = 0;
  size_t length = 0;
  SourceKind kind = SourceKind::kNoise;
  std::string source_id;     // utterance id (speech) or noise clip id
  size_t source_index = 0;   // index into the batch or noise pool
  size_t source_offset = 0;
  double snr_db = 0.0;
};

struct AugmentationPlan {
  std::vector<AugmentSegment> segments;

  bool Empty() const { return segments.empty(); }
  size_t TotalLength() const {
    size_t n = 0;
    for (const auto &s : segments) n += s.length;
    return n;
  }
};

namespace detail {

inline double RmsOf(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace detail

inline void ValidateAugmentConfig(const AugmentConfig &cfg) {
  if (cfg.p_aug < 0.0 || cfg.p_aug > 1.0) {
    throw InvalidSpecError("augment: p_aug must be in [0,1]");
  }
  if (std::abs(cfg.p_noise + cfg.p_speech - 1.0) > 1e-9) {
    throw InvalidSpecError("augment: p_noise + p_speech must equal 1");
  }
  if (!(0.0 <= cfg.ratio_min && cfg.ratio_min <= cfg.ratio_max &&
        cfg.ratio_max <= 1.0)) {
    throw InvalidSpecError("augment: require 0 <= ratio_min <= ratio_max <= 1");
  }
  if (cfg.max_segments < 1) {
    throw InvalidSpecError("augment: max_segments must be >= 1");
  }
  if (cfg.snr_db_min > cfg.snr_db_max) {
    throw InvalidSpecError("augment: snr_db_min must be <= snr_db_max");
  }
}

// Draw order is frozen: gate, total length, segment count, split points,
// gaps, noise-vs-speech, then per segment source / offset / snr. The total
// length is drawn as an integer in [ceil(ratio_min*N), floor(ratio_max*N)] so
// the realized ratio always lands inside the configured band.
inline AugmentationPlan PlanAugmentation(const Waveform &primary,
                                         std::span<const Waveform> batch,
                                         std::span<const Waveform> noise_pool,
                                         const AugmentConfig &cfg,
                                         Xoshiro256ss &rng) {
  ValidateAugmentConfig(cfg);
  AugmentationPlan plan;
  if (!rng.Bernoulli(cfg.p_aug)) return plan;

  const size_t n = primary.size();
  size_t total_min =
      static_cast<size_t>(std::ceil(cfg.ratio_min * static_cast<double>(n)));
  const size_t total_max =
      static_cast<size_t>(std::floor(cfg.ratio_max * static_cast<double>(n)));
  total_min = std::max<size_t>(total_min, 1);
  if (total_min > total_max) {
    throw InvalidSpecError("augment: primary too short for the ratio band");
  }
  const size_t total = total_min + rng.Below(total_max - total_min + 1);

  const size_t max_segs =
      std::min<size_t>(static_cast<size_t>(cfg.max_segments), total);
  const size_t n_segs = 1 + rng.Below(max_segs);

  // Uniform composition of `total` into n_segs parts, each >= 1 sample.
  std::set<size_t> cuts;
  while (cuts.size() < n_segs - 1) {
    cuts.insert(1 + rng.Below(total - 1));
  }
  std::vector<size_t> lengths;
  size_t prev = 0;
  for (size_t c : cuts) {
    lengths.push_back(c - prev);
    prev = c;
  }
  lengths.push_back(total - prev);

  // Scatter: distribute the slack uniformly into n_segs+1 gaps.
  const size_t slack = n - total;
  std::vector<size_t> marks(n_segs);
  for (auto &m : marks) m = rng.Below(slack + 1);
  std::sort(marks.begin(), marks.end());
  std::vector<size_t> starts(n_segs);
  size_t cursor = 0, prev_mark = 0;
  for (size_t i = 0; i < n_segs; ++i) {
    cursor += marks[i] - prev_mark;
    prev_mark = marks[i];
    starts[i] = cursor;
    cursor += lengths[i];
  }

  const bool noise_plan = rng.Bernoulli(cfg.p_noise);
  for (size_t i = 0; i < n_segs; ++i) {
    AugmentSegment seg;
    seg.primary_start = starts[i];
    seg.length = lengths[i];
    if (noise_plan) {
      seg.kind = SourceKind::kNoise;
      std::vector<size_t> eligible;
      for (size_t j = 0; j < noise_pool.size(); ++j) {
        if (noise_pool[j].size() >= seg.length) eligible.push_back(j);
      }
      if (eligible.empty()) {
        throw InvalidSpecError("augment: no noise clip long enough");
      }
      seg.source_index = eligible[rng.Below(eligible.size())];
      seg.source_id = noise_pool[seg.source_index].id;
      seg.source_offset =
          rng.Below(noise_pool[seg.source_index].size() - seg.length + 1);
    } else {
      seg.kind = SourceKind::kSpeaker;
      std::vector<size_t> eligible;
      for (size_t j = 0; j < batch.size(); ++j) {
        const auto &w = batch[j];
        if (!w.speaker_id.empty() && w.speaker_id != primary.speaker_id &&
            w.size() >= seg.length) {
          eligible.push_back(j);
        }
      }
      if (eligible.empty()) {
        throw NoEligibleSpeakerError(
            "augment: no batch member with a different speaker fits");
      }
      seg.source_index = eligible[rng.Below(eligible.size())];
      seg.source_id = batch[seg.source_index].id;
      seg.source_offset =
          rng.Below(batch[seg.source_index].size() - seg.length + 1);
    }
    seg.snr_db = rng.Uniform(cfg.snr_db_min, cfg.snr_db_max);
    plan.segments.push_back(seg);
  }
  return plan;
}

// Resolves a plan segment to its source audio; returns nullptr when unknown.
using SourceResolver =
    std::function<const Waveform *(const AugmentSegment &)>;

inline SourceResolver MakeResolver(std::span<const Waveform> batch,
                                   std::span<const Waveform> noise_pool) {
  return [batch, noise_pool](const AugmentSegment &seg) -> const Waveform * {
    const auto pool = seg.kind == SourceKind::kNoise ? noise_pool : batch;
    if (seg.source_index < pool.size() &&
        pool[seg.source_index].id == seg.source_id) {
      return &pool[seg.source_index];
    }
    for (const auto &w : pool) {
      if (w.id == seg.source_id) return &w;
    }
    return nullptr;
  };
}

// On each segment: out = clamp(primary + g * source, -1, 1) with
// g = primary_rms / (source_rms * 10^(snr/20)) over that segment; a silent
// source region gives g = 0. Samples outside all segments are untouched.
inline Waveform Mix(const Waveform &primary, const AugmentationPlan &plan,
                    const SourceResolver &resolve) {
  Waveform out = primary;
  for (const auto &seg : plan.segments) {
    const Waveform *src = resolve(seg);
    if (src == nullptr) {
      throw UnresolvableSourceError("mix: cannot resolve source '" +
                                    seg.source_id + "'");
    }
    if (seg.primary_start + seg.length > primary.size()) {
      throw OffsetOutOfRangeError("mix: segment exceeds the primary");
    }
    if (seg.source_offset + seg.length > src->size()) {
      throw OffsetOutOfRangeError("mix: segment exceeds source '" +
                                  seg.source_id + "'");
    }
    const std::span<const float> p{primary.samples.data() + seg.primary_start,
                                   seg.length};
    const std::span<const float> s{src->samples.data() + seg.source_offset,
                                   seg.length};
    const double p_rms = detail::RmsOf(p);
    const double s_rms = detail::RmsOf(s);
    const double gain =
        s_rms > 0.0 ? p_rms / (s_rms * std::pow(10.0, seg.snr_db / 20.0)) : 0.0;
    for (size_t i = 0; i < seg.length; ++i) {
      const double v = static_cast<double>(p[i]) + gain * s[i];
      out.samples[seg.primary_start + i] =
          static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  return out;
}

}  // namespace nest
