// nest/prng.hpp

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

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace nest {

// Pinned randomness for the whole pipeline: splitmix64 seeding, xoshiro256**
// streams, Box-Muller gaussians. std::random distributions are
// implementation-defined, so everything here is spelled out and all outputs
// are reproducible from (seed, draw order) alone.

inline constexpr uint64_t RotL64(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

struct SplitMix64 {
  uint64_t state = 0;

  uint64_t Next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

// One splitmix64 scramble of a value (stateless mixing step).
inline uint64_t Mix64(uint64_t x) {
  SplitMix64 sm{x};
  return sm.Next();
}

class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto &w : s_) w = sm.Next();
  }

  static Xoshiro256ss FromState(const std::array<uint64_t, 4> &s) {
    Xoshiro256ss rng(0);
    rng.s_ = s;
    return rng;
  }

  std::array<uint64_t, 4> State() const { return s_; }

  uint64_t Next() {
    const uint64_t result = RotL64(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = RotL64(s_[3], 45);
    return result;
  }

  // Uniform in [0,1), 53-bit resolution.
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1]; safe as a log() argument.
  double UniformOpen() {
    return static_cast<double>((Next() >> 11) + 1) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Uniform integer in [0, n), n >= 1. Multiply-shift keeps the draw exact
  // integer arithmetic (bias below 2^-64).
  uint64_t Below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(Next()) * n) >> 64);
  }

  // Standard normal via Box-Muller, cosine branch only: each call consumes
  // exactly two uniforms, so draw counts are position-independent.
  double Gaussian() {
    const double u1 = UniformOpen();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::array<uint64_t, 4> s_{};
};

// Stream tags for keyed parallel streams; values are arbitrary but frozen.
enum class StreamTag : uint64_t {
  kInit = 1,
  kShuffle = 2,
  kAugment = 3,
  kMask = 4,
  kSynth = 5,
  kGradCheck = 6,
  kTest = 7,
};

// Derives an independent stream from a root seed and a key path, e.g.
// (seed, kAugment, utterance, step). Streams for distinct paths are
// order-independent, which is what makes batch construction parallelizable.
inline Xoshiro256ss DeriveStream(uint64_t root,
                                 std::initializer_list<uint64_t> path) {
  uint64_t h = Mix64(root);
  for (uint64_t c : path) h = Mix64(h ^ c);
  return Xoshiro256ss(h);
}

inline Xoshiro256ss DeriveStream(uint64_t root, StreamTag tag,
                                 std::initializer_list<uint64_t> rest = {}) {
  uint64_t h = Mix64(root);
  h = Mix64(h ^ static_cast<uint64_t>(tag));
  for (uint64_t c : rest) h = Mix64(h ^ c);
  return Xoshiro256ss(h);
}

}  // namespace nest
