// tests/test_masking.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "nest/masking.hpp"

using namespace nest;

TEST_CASE("sample_mask: zero probability masks nothing") {
  MaskConfig cfg;
  cfg.p_m = 0.0;
  Xoshiro256ss rng(1);
  const MaskSpec spec = SampleMask(500, cfg, rng);
  CHECK(spec.starts.empty());
  CHECK(spec.CountMasked() == 0);
}

TEST_CASE("sample_mask: p_m=1, l_m=1 masks everything") {
  MaskConfig cfg;
  cfg.p_m = 1.0;
  cfg.l_m = 1;
  Xoshiro256ss rng(1);
  const MaskSpec spec = SampleMask(200, cfg, rng);
  CHECK(spec.starts.size() == 200);
  CHECK(spec.CountMasked() == 200);
}

TEST_CASE("sample_mask rejects empty input") {
  MaskConfig cfg;
  Xoshiro256ss rng(1);
  CHECK_THROWS_AS(SampleMask(0, cfg, rng), EmptyInputError);
}

// Monte-Carlo check of the closed-form interior rate 1 - 0.99^40, derived
// before the build; 200 seeds keep the estimator's sigma ~3e-3, so the 0.01
// band is a ~3-sigma test with a fixed stream.
TEST_CASE("sample_mask: interior masked rate matches 1-(1-p)^l") {
  MaskConfig cfg;  // p_m = 0.01, l_m = 40
  const size_t frames = 4000;
  size_t masked = 0, counted = 0;
  for (uint64_t trial = 0; trial < 200; ++trial) {
    Xoshiro256ss rng = DeriveStream(900, StreamTag::kMask, {trial});
    const MaskSpec spec = SampleMask(frames, cfg, rng);
    for (size_t i = 39; i < frames; ++i) {
      masked += spec.masked[i];
      ++counted;
    }
  }
  const double rate = static_cast<double>(masked) / static_cast<double>(counted);
  CHECK_THAT(rate, Catch::Matchers::WithinAbs(0.3310282414303197, 0.01));
}

// Per-index marginal: 1-(1-p)^{min(i+1, l_m)}; 4-sigma binomial tolerance.
TEST_CASE("sample_mask: per-index marginal masking probability") {
  MaskConfig cfg;
  cfg.p_m = 0.05;
  cfg.l_m = 10;
  const size_t frames = 120;
  const size_t trials = 4000;
  std::vector<size_t> hits(frames, 0);
  for (uint64_t t = 0; t < trials; ++t) {
    Xoshiro256ss rng = DeriveStream(901, StreamTag::kMask, {t});
    const MaskSpec spec = SampleMask(frames, cfg, rng);
    for (size_t i = 0; i < frames; ++i) hits[i] += spec.masked[i];
  }
  for (size_t i : {size_t{0}, size_t{3}, size_t{8}, size_t{9}, size_t{50},
                   size_t{119}}) {
    const double exponent =
        static_cast<double>(std::min<size_t>(i + 1, cfg.l_m));
    const double p = 1.0 - std::pow(1.0 - cfg.p_m, exponent);
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    const double observed = static_cast<double>(hits[i]) / trials;
    CHECK_THAT(observed, Catch::Matchers::WithinAbs(p, 4.0 * sigma));
  }
}

TEST_CASE("sample_mask: masked runs come only from blocks and their unions") {
  Xoshiro256ss gen(902);
  for (int trial = 0; trial < 50; ++trial) {
    MaskConfig cfg;
    cfg.p_m = 0.02 + 0.2 * gen.Uniform();
    cfg.l_m = 1 + static_cast<int>(gen.Below(60));
    const size_t frames = 50 + gen.Below(400);
    Xoshiro256ss rng(gen.Next());
    const MaskSpec spec = SampleMask(frames, cfg, rng);

    // masked[i] must equal the union over starts
    std::vector<uint8_t> rebuilt(frames, 0);
    for (size_t s : spec.starts) {
      for (size_t i = s; i < std::min(frames, s + cfg.l_m); ++i) rebuilt[i] = 1;
    }
    REQUIRE(rebuilt == spec.masked);

    // every maximal run is at least min(l_m, frames - run_start) long
    size_t i = 0;
    while (i < frames) {
      if (!spec.masked[i]) {
        ++i;
        continue;
      }
      size_t j = i;
      while (j < frames && spec.masked[j]) ++j;
      CHECK(j - i >= std::min<size_t>(cfg.l_m, frames - i));
      i = j;
    }
  }
}

TEST_CASE("apply_mask: identity, saturation, clipping") {
  const MelSpectrogram mel = test::RandomMel(30, 8, 77);
  MaskConfig cfg;

  MaskSpec none;
  none.masked.assign(30, 0);
  const MelSpectrogram same = ApplyMask(mel, none, cfg);
  CHECK(std::memcmp(same.data.data(), mel.data.data(),
                    mel.data.size() * sizeof(float)) == 0);

  MaskSpec all;
  all.masked.assign(30, 1);
  const MelSpectrogram zeroed = ApplyMask(mel, all, cfg);
  for (float v : zeroed.data) CHECK(v == 0.0f);

  // starts={0}, l_m=40, T=30: the block clips to exactly 30 masked frames
  cfg.l_m = 40;
  Xoshiro256ss rng(1);
  MaskConfig clip_cfg;
  clip_cfg.p_m = 0.0;
  clip_cfg.l_m = 40;
  MaskSpec clipped;
  clipped.starts = {0};
  clipped.masked.assign(30, 0);
  for (size_t i = 0; i < 30; ++i) clipped.masked[i] = 1;
  CHECK(clipped.masked.size() == 30);
  const MelSpectrogram out = ApplyMask(mel, clipped, clip_cfg);
  size_t masked_frames = 0;
  for (size_t t = 0; t < out.n_frames; ++t) {
    bool zero = true;
    for (float v : out.Frame(t)) zero = zero && v == 0.0f;
    if (zero) ++masked_frames;
  }
  CHECK(masked_frames == 30);
}

TEST_CASE("apply_mask: sampled clipping at the sequence end") {
  MaskConfig cfg;
  cfg.p_m = 1.0;  // every frame a start; tail blocks clip
  cfg.l_m = 40;
  Xoshiro256ss rng(1);
  const MaskSpec spec = SampleMask(30, cfg, rng);
  CHECK(spec.CountMasked() == 30);
  CHECK(spec.starts.size() == 30);
}

TEST_CASE("apply_mask never alters unmasked frames (bitwise)") {
  const MelSpectrogram mel = test::RandomMel(96, 16, 31);
  MaskConfig cfg;
  cfg.p_m = 0.08;
  cfg.l_m = 12;
  Xoshiro256ss rng(8);
  const MaskSpec spec = SampleMask(96, cfg, rng);
  const MelSpectrogram out = ApplyMask(mel, spec, cfg);
  for (size_t t = 0; t < 96; ++t) {
    if (!spec.masked[t]) {
      CHECK(std::memcmp(out.Frame(t).data(), mel.Frame(t).data(),
                        16 * sizeof(float)) == 0);
    } else {
      for (float v : out.Frame(t)) CHECK(v == 0.0f);
    }
  }
}

TEST_CASE("apply_mask rejects length mismatch") {
  const MelSpectrogram mel = test::RandomMel(10, 8, 3);
  MaskSpec spec;
  spec.masked.assign(9, 0);
  CHECK_THROWS_AS(ApplyMask(mel, spec, MaskConfig{}), LengthMismatchError);
}
