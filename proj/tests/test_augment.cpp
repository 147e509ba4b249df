// tests/test_augment.cpp

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

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "nest/augment.hpp"

using namespace nest;

namespace {

Waveform MakeWav(const std::string &id, const std::string &speaker, size_t n,
                 float value) {
  Waveform w;
  w.id = id;
  w.speaker_id = speaker;
  w.samples.assign(n, value);
  return w;
}

std::vector<Waveform> MakeBatch(size_t n_speakers, size_t len) {
  std::vector<Waveform> batch;
  for (size_t s = 0; s < n_speakers; ++s) {
    batch.push_back(
        MakeWav("utt" + std::to_string(s), "spk" + std::to_string(s), len,
                0.1f * static_cast<float>(s + 1)));
  }
  return batch;
}

double SegmentRms(const std::vector<float> &x, size_t start, size_t len) {
  double acc = 0.0;
  for (size_t i = start; i < start + len; ++i) acc += double(x[i]) * x[i];
  return std::sqrt(acc / static_cast<double>(len));
}

}  // namespace

TEST_CASE("plan_augmentation: p_aug = 0 always gives the empty plan") {
  auto batch = MakeBatch(4, 16000);
  AugmentConfig cfg;
  cfg.p_aug = 0.0;
  Xoshiro256ss rng(1);
  for (int i = 0; i < 50; ++i) {
    CHECK(PlanAugmentation(batch[0], batch, batch, cfg, rng).Empty());
  }
}

TEST_CASE("plan_augmentation: plans respect every structural invariant") {
  auto batch = MakeBatch(4, 16000);
  auto noise = std::vector<Waveform>{MakeWav("n0", "", 32000, 0.05f),
                                     MakeWav("n1", "", 24000, 0.02f)};
  AugmentConfig cfg;
  cfg.p_aug = 1.0;
  Xoshiro256ss rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto plan = PlanAugmentation(batch[0], batch, noise, cfg, rng);
    REQUIRE_FALSE(plan.Empty());
    REQUIRE(plan.segments.size() >= 1);
    REQUIRE(plan.segments.size() <= 3);

    const double ratio = static_cast<double>(plan.TotalLength()) / 16000.0;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);

    auto segs = plan.segments;
    std::sort(segs.begin(), segs.end(),
              [](const auto &a, const auto &b) {
                return a.primary_start < b.primary_start;
              });
    for (size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].length >= 1);
      CHECK(segs[i].primary_start + segs[i].length <= 16000);
      if (i > 0) {
        CHECK(segs[i - 1].primary_start + segs[i - 1].length <=
              segs[i].primary_start);
      }
      CHECK(segs[i].snr_db >= cfg.snr_db_min);
      CHECK(segs[i].snr_db <= cfg.snr_db_max);
      if (segs[i].kind == SourceKind::kSpeaker) {
        CHECK(batch[segs[i].source_index].speaker_id != batch[0].speaker_id);
        CHECK(segs[i].source_offset + segs[i].length <=
              batch[segs[i].source_index].size());
      } else {
        CHECK(segs[i].source_offset + segs[i].length <=
              noise[segs[i].source_index].size());
      }
    }
    // a plan is either all-noise or all-speech
    for (const auto &s : segs) CHECK(s.kind == segs[0].kind);
  }
}

TEST_CASE("plan_augmentation: distribution matches the configured rates") {
  auto batch = MakeBatch(4, 16000);
  auto noise = std::vector<Waveform>{MakeWav("n0", "", 32000, 0.05f)};
  AugmentConfig cfg;  // defaults: p_aug 0.2, noise/speech 0.1/0.9
  size_t nonempty = 0, noise_plans = 0;
  size_t by_count[4] = {0, 0, 0, 0};
  const size_t trials = 10000;
  for (uint64_t t = 0; t < trials; ++t) {
    Xoshiro256ss rng = DeriveStream(42, StreamTag::kAugment, {t});
    const auto plan = PlanAugmentation(batch[0], batch, noise, cfg, rng);
    if (plan.Empty()) continue;
    ++nonempty;
    if (plan.segments[0].kind == SourceKind::kNoise) ++noise_plans;
    ++by_count[plan.segments.size()];
  }
  const double aug_rate = static_cast<double>(nonempty) / trials;
  CHECK_THAT(aug_rate, Catch::Matchers::WithinAbs(0.2, 0.02));
  const double noise_share =
      static_cast<double>(noise_plans) / static_cast<double>(nonempty);
  CHECK_THAT(noise_share, Catch::Matchers::WithinAbs(0.1, 0.02));
  for (int n = 1; n <= 3; ++n) {
    const double share =
        static_cast<double>(by_count[n]) / static_cast<double>(nonempty);
    CHECK_THAT(share, Catch::Matchers::WithinAbs(1.0 / 3.0, 0.03));
  }
}

TEST_CASE("plan_augmentation: single-speaker batch raises NoEligibleSpeaker") {
  std::vector<Waveform> batch{MakeWav("a", "spk0", 16000, 0.1f),
                              MakeWav("b", "spk0", 16000, 0.2f)};
  AugmentConfig cfg;
  cfg.p_aug = 1.0;
  cfg.p_noise = 0.0;
  cfg.p_speech = 1.0;
  Xoshiro256ss rng(3);
  CHECK_THROWS_AS(
      PlanAugmentation(batch[0], batch, std::vector<Waveform>{}, cfg, rng),
      NoEligibleSpeakerError);
}

TEST_CASE("plan_augmentation and mix are deterministic per seed") {
  auto batch = MakeBatch(4, 16000);
  auto noise = std::vector<Waveform>{MakeWav("n0", "", 32000, 0.05f)};
  AugmentConfig cfg;
  cfg.p_aug = 1.0;
  const auto resolver = MakeResolver(batch, noise);
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Xoshiro256ss r1(seed), r2(seed);
    const auto p1 = PlanAugmentation(batch[0], batch, noise, cfg, r1);
    const auto p2 = PlanAugmentation(batch[0], batch, noise, cfg, r2);
    REQUIRE(p1.segments.size() == p2.segments.size());
    for (size_t i = 0; i < p1.segments.size(); ++i) {
      CHECK(p1.segments[i].primary_start == p2.segments[i].primary_start);
      CHECK(p1.segments[i].length == p2.segments[i].length);
      CHECK(p1.segments[i].source_id == p2.segments[i].source_id);
      CHECK(p1.segments[i].source_offset == p2.segments[i].source_offset);
      CHECK(p1.segments[i].snr_db == p2.segments[i].snr_db);
    }
    CHECK(Mix(batch[0], p1, resolver).samples ==
          Mix(batch[0], p2, resolver).samples);
  }
}

TEST_CASE("mix: empty plan is the identity") {
  auto batch = MakeBatch(2, 8000);
  const Waveform out =
      Mix(batch[0], AugmentationPlan{}, MakeResolver(batch, batch));
  CHECK(out.samples == batch[0].samples);
}

TEST_CASE("mix: silent source region mixes nothing") {
  auto primary = MakeWav("p", "spk0", 8000, 0.1f);
  auto silent = MakeWav("s", "spk1", 8000, 0.0f);
  std::vector<Waveform> pool{primary, silent};
  AugmentationPlan plan;
  plan.segments.push_back({1000, 2000, SourceKind::kSpeaker, "s", 1, 0, 5.0});
  const Waveform out = Mix(primary, plan, MakeResolver(pool, pool));
  CHECK(out.samples == primary.samples);
}

TEST_CASE("mix: SNR gain follows g = p_rms / (s_rms * 10^(snr/20))") {
  // full-cover segment, primary rms 0.1, source rms 0.2, 0 dB -> gain 0.5
  auto primary = MakeWav("p", "spk0", 8000, 0.1f);
  auto source = MakeWav("s", "spk1", 8000, 0.2f);
  std::vector<Waveform> pool{primary, source};
  AugmentationPlan plan;
  plan.segments.push_back({0, 8000, SourceKind::kSpeaker, "s", 1, 0, 0.0});
  const Waveform out = Mix(primary, plan, MakeResolver(pool, pool));
  // mixed = 0.1 + 0.5 * 0.2 = 0.2 everywhere
  for (float v : out.samples) {
    CHECK_THAT(v, Catch::Matchers::WithinAbs(0.2, 1e-6));
  }
  // recompute the scaled-source rms from the mixed components
  std::vector<float> delta(out.samples.size());
  for (size_t i = 0; i < delta.size(); ++i) {
    delta[i] = out.samples[i] - primary.samples[i];
  }
  CHECK_THAT(SegmentRms(delta, 0, delta.size()),
             Catch::Matchers::WithinAbs(0.1, 1e-6));
}

TEST_CASE("mix: output is clamped into [-1, 1]") {
  auto primary = MakeWav("p", "spk0", 4000, 0.9f);
  auto loud = MakeWav("s", "spk1", 4000, 0.9f);
  std::vector<Waveform> pool{primary, loud};
  AugmentationPlan plan;
  plan.segments.push_back({0, 4000, SourceKind::kSpeaker, "s", 1, 0, -5.0});
  const Waveform out = Mix(primary, plan, MakeResolver(pool, pool));
  for (float v : out.samples) {
    CHECK(v <= 1.0f);
    CHECK(v >= -1.0f);
  }
}

TEST_CASE("mix: identity outside segments") {
  auto primary = MakeWav("p", "spk0", 8000, 0.1f);
  auto source = MakeWav("s", "spk1", 8000, 0.3f);
  std::vector<Waveform> pool{primary, source};
  AugmentationPlan plan;
  plan.segments.push_back({2000, 1000, SourceKind::kSpeaker, "s", 1, 500, 3.0});
  const Waveform out = Mix(primary, plan, MakeResolver(pool, pool));
  for (size_t i = 0; i < 8000; ++i) {
    if (i < 2000 || i >= 3000) {
      CHECK(out.samples[i] == primary.samples[i]);
    }
  }
}

TEST_CASE("mix error contracts") {
  auto primary = MakeWav("p", "spk0", 4000, 0.1f);
  std::vector<Waveform> pool{primary};
  AugmentationPlan plan;
  plan.segments.push_back({0, 1000, SourceKind::kSpeaker, "ghost", 9, 0, 0.0});
  CHECK_THROWS_AS(Mix(primary, plan, MakeResolver(pool, pool)),
                  UnresolvableSourceError);

  auto source = MakeWav("s", "spk1", 2000, 0.3f);
  std::vector<Waveform> pool2{primary, source};
  AugmentationPlan bad_offset;
  bad_offset.segments.push_back(
      {0, 1000, SourceKind::kSpeaker, "s", 1, 1500, 0.0});
  CHECK_THROWS_AS(Mix(primary, bad_offset, MakeResolver(pool2, pool2)),
                  OffsetOutOfRangeError);
}

TEST_CASE("augment config validation") {
  auto batch = MakeBatch(2, 16000);
  Xoshiro256ss rng(1);
  AugmentConfig cfg;
  cfg.p_noise = 0.5;  // p_noise + p_speech != 1
  CHECK_THROWS_AS(PlanAugmentation(batch[0], batch, batch, cfg, rng),
                  InvalidSpecError);
  cfg = AugmentConfig{};
  cfg.ratio_min = 0.7;
  cfg.ratio_max = 0.6;
  CHECK_THROWS_AS(PlanAugmentation(batch[0], batch, batch, cfg, rng),
                  InvalidSpecError);
}
