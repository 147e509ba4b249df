// tests/helpers.hpp

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

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "nest/prng.hpp"
#include "nest/signal.hpp"

namespace nest::test {

// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string &tag) {
    path = std::filesystem::temp_directory_path() /
           ("nest-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
};

inline MelSpectrogram RandomMel(size_t frames, size_t mels, uint64_t seed,
                                double lo = -8.0, double hi = 4.0) {
  Xoshiro256ss rng(seed);
  MelSpectrogram mel;
  mel.n_frames = frames;
  mel.n_mels = mels;
  mel.data.resize(frames * mels);
  for (auto &v : mel.data) v = static_cast<float>(rng.Uniform(lo, hi));
  return mel;
}

inline std::vector<float> RandomFrame(size_t dim, Xoshiro256ss &rng) {
  std::vector<float> f(dim);
  for (auto &v : f) v = static_cast<float>(rng.Gaussian());
  return f;
}

}  // namespace nest::test
