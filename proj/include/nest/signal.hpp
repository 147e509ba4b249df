// nest/signal.hpp

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
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/prng.hpp"

namespace nest {

constexpr int kSampleRate = 16000;

// Mono 16 kHz PCM audio in [-1,1). `id` is an opaque utterance identifier
// (typically the manifest path); `speaker_id` is empty when unknown.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::string id;
  std::string speaker_id;

  size_t size() const { return samples.size(); }
};

struct MelConfig {
  int n_fft = 512;
  int win_length = 400;  // 25 ms
  int hop_length = 160;  // 10 ms; x8 sub-sampling gives the 80 ms frame
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
};

// T x n_mels natural-log mel energies, row-major.
struct MelSpectrogram {
  size_t n_frames = 0;
  size_t n_mels = 0;
  std::vector<float> data;
  int hop_ms = 10;
  std::string source_id;

  std::span<const float> Frame(size_t t) const {
    return {data.data() + t * n_mels, n_mels};
  }
  std::span<float> Frame(size_t t) {
    return {data.data() + t * n_mels, n_mels};
  }
};

namespace detail {

// In-place iterative radix-2 FFT. n must be a power of two.
inline void Fft(std::vector<std::complex<double>> &a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline uint32_t ReadU32(const uint8_t *p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline uint16_t ReadU16(const uint8_t *p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

inline double HzToMel(double f) {
  return 2595.0 * std::log10(1.0 + f / 700.0);
}

inline double MelToHz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

// Center frequencies (Hz) of the n_mels triangular filters.
inline std::vector<double> MelFilterCenters(const MelConfig &cfg) {
  const double mlo = HzToMel(cfg.fmin);
  const double mhi = HzToMel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels);
  for (int i = 0; i < cfg.n_mels; ++i) {
    centers[i] = MelToHz(mlo + (mhi - mlo) * (i + 1) / (cfg.n_mels + 1));
  }
  return centers;
}

// Triangular HTK-mel filterbank, n_mels x (n_fft/2+1), each filter scaled to
// unit sum over FFT bins.
inline std::vector<std::vector<double>> MelFilterbank(const MelConfig &cfg) {
  const int nbins = cfg.n_fft / 2 + 1;
  const double mlo = HzToMel(cfg.fmin);
  const double mhi = HzToMel(cfg.fmax);
  std::vector<double> pts(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[i] = MelToHz(mlo + (mhi - mlo) * i / (cfg.n_mels + 1));
  }
  std::vector<std::vector<double>> fbank(cfg.n_mels,
                                         std::vector<double>(nbins, 0.0));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double fl = pts[m], fc = pts[m + 1], fr = pts[m + 2];
    double sum = 0.0;
    for (int k = 0; k < nbins; ++k) {
      const double fk = static_cast<double>(k) * kSampleRate / cfg.n_fft;
      const double left = fc > fl ? (fk - fl) / (fc - fl) : 0.0;
      const double right = fr > fc ? (fr - fk) / (fr - fc) : 0.0;
      const double w = std::max(0.0, std::min(left, right));
      fbank[m][k] = w;
      sum += w;
    }
    if (sum > 0.0) {
      for (int k = 0; k < nbins; ++k) fbank[m][k] /= sum;
    }
  }
  return fbank;
}

// Periodic Hann window of length n.
inline std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

inline void ValidateMelConfig(const MelConfig &cfg) {
  if (cfg.n_fft <= 0 || (cfg.n_fft & (cfg.n_fft - 1)) != 0) {
    throw InvalidSpecError("mel: n_fft must be a positive power of two");
  }
  if (cfg.win_length <= 0 || cfg.win_length > cfg.n_fft) {
    throw InvalidSpecError("mel: require 0 < win_length <= n_fft");
  }
  if (cfg.hop_length <= 0) throw InvalidSpecError("mel: hop_length must be positive");
  if (cfg.n_mels < 1) throw InvalidSpecError("mel: n_mels must be >= 1");
  if (!(cfg.log_floor > 0.0)) throw InvalidSpecError("mel: log_floor must be > 0");
  if (!(cfg.fmin >= 0.0) || !(cfg.fmax > cfg.fmin) ||
      cfg.fmax > kSampleRate / 2.0) {
    throw InvalidSpecError("mel: require 0 <= fmin < fmax <= 8000");
  }
}

// Hann STFT power spectrum -> unit-sum HTK mel filterbank -> ln with floor.
// T == 1 + floor((N - win_length)/hop_length); no padding, the tail shorter
// than one window is dropped.
inline MelSpectrogram MelSpectrogramOf(const Waveform &wav,
                                       const MelConfig &cfg = {}) {
  ValidateMelConfig(cfg);
  const size_t n = wav.samples.size();
  if (n < static_cast<size_t>(cfg.win_length)) {
    throw TooShortError("mel: waveform shorter than one analysis window");
  }
  const size_t frames = 1 + (n - cfg.win_length) / cfg.hop_length;
  const int nbins = cfg.n_fft / 2 + 1;
  const auto window = HannWindow(cfg.win_length);
  const auto fbank = MelFilterbank(cfg);
  const double lnfloor = std::log(cfg.log_floor);

  MelSpectrogram mel;
  mel.n_frames = frames;
  mel.n_mels = cfg.n_mels;
  mel.hop_ms = cfg.hop_length * 1000 / kSampleRate;
  mel.source_id = wav.id;
  mel.data.resize(frames * cfg.n_mels);

  std::vector<std::complex<double>> buf(cfg.n_fft);
  std::vector<double> power(nbins);
  for (size_t t = 0; t < frames; ++t) {
    const size_t off = t * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) {
      buf[i] = {static_cast<double>(wav.samples[off + i]) * window[i], 0.0};
    }
    std::fill(buf.begin() + cfg.win_length, buf.end(),
              std::complex<double>(0.0, 0.0));
    detail::Fft(buf);
    for (int k = 0; k < nbins; ++k) power[k] = std::norm(buf[k]);
    float *out = mel.data.data() + t * cfg.n_mels;
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const auto &filt = fbank[m];
      for (int k = 0; k < nbins; ++k) e += filt[k] * power[k];
      out[m] = static_cast<float>(
          e > cfg.log_floor ? std::log(e) : lnfloor);
    }
  }
  return mel;
}

// ---- WAV I/O: RIFF PCM16 mono 16 kHz only; anything else is rejected so a
// mis-prepared corpus fails loudly instead of being resampled behind the
// operator's back.

inline Waveform LoadWav(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormatError(path.string() + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t *data = nullptr;
  uint32_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t *hdr = bytes.data() + pos;
    const uint32_t sz = detail::ReadU32(hdr + 4);
    if (pos + 8 + sz > bytes.size()) {
      throw UnsupportedFormatError(path.string() + ": truncated chunk");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0 && sz >= 16) {
      format = detail::ReadU16(hdr + 8);
      channels = detail::ReadU16(hdr + 10);
      rate = detail::ReadU32(hdr + 12);
      bits = detail::ReadU16(hdr + 22);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = hdr + 8;
      data_len = sz;
    }
    pos += 8 + sz + (sz & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) {
    throw UnsupportedFormatError(path.string() + ": missing fmt/data chunk");
  }
  if (format != 1) {
    throw UnsupportedFormatError(path.string() + ": not PCM (format " +
                                 std::to_string(format) + ")");
  }
  if (channels != 1) {
    throw UnsupportedFormatError(path.string() + ": expected mono, got " +
                                 std::to_string(channels) + " channels");
  }
  if (rate != kSampleRate) {
    throw UnsupportedFormatError(path.string() + ": expected 16000 Hz, got " +
                                 std::to_string(rate));
  }
  if (bits != 16) {
    throw UnsupportedFormatError(path.string() + ": expected 16-bit PCM, got " +
                                 std::to_string(bits));
  }
  Waveform wav;
  wav.id = path.string();
  wav.samples.resize(data_len / 2);
  for (size_t i = 0; i < wav.samples.size(); ++i) {
    const int16_t s =
        static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    wav.samples[i] = static_cast<float>(s) / 32768.0f;
  }
  return wav;
}

inline void SaveWav(const std::filesystem::path &path, const Waveform &wav) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const uint32_t data_len = static_cast<uint32_t>(wav.samples.size() * 2);
  auto u32 = [&](uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16),
                          static_cast<uint8_t>(v >> 24)};
    f.write(reinterpret_cast<const char *>(b), 4);
  };
  auto u16 = [&](uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v),
                          static_cast<uint8_t>(v >> 8)};
    f.write(reinterpret_cast<const char *>(b), 2);
  };
  f.write("RIFF", 4);
  u32(36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(kSampleRate);
  u32(kSampleRate * 2);  // byte rate
  u16(2);                // block align
  u16(16);               // bits
  f.write("data", 4);
  u32(data_len);
  for (float s : wav.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0f));
    u16(static_cast<uint16_t>(q));
  }
  if (!f) throw IoError("short write to " + path.string());
}

// ---- Synthetic signals for tests and the toy corpus (stands in for an
// external noise corpus).

enum class SynthKind { kTone, kWhiteNoise, kSilence };

struct SynthSpec {
  SynthKind kind = SynthKind::kSilence;
  double freq_hz = 0.0;
  double duration_s = 1.0;
  double amplitude = 1.0;
  uint64_t seed = 0;
};

inline Waveform Synthesize(const SynthSpec &spec) {
  if (!(spec.duration_s > 0.0)) {
    throw InvalidSpecError("synthesize: duration must be positive");
  }
  if (!(spec.amplitude > 0.0) || spec.amplitude > 1.0) {
    throw InvalidSpecError("synthesize: amplitude must be in (0, 1]");
  }
  if (spec.kind == SynthKind::kTone &&
      !(spec.freq_hz > 0.0 && spec.freq_hz < kSampleRate / 2.0)) {
    throw InvalidSpecError("synthesize: tone frequency must be in (0, 8000)");
  }
  const size_t n = static_cast<size_t>(std::llround(spec.duration_s * kSampleRate));
  Waveform wav;
  wav.samples.assign(n, 0.0f);
  switch (spec.kind) {
    case SynthKind::kSilence:
      break;
    case SynthKind::kTone:
      for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        wav.samples[i] = static_cast<float>(
            spec.amplitude *
            std::sin(2.0 * std::numbers::pi * spec.freq_hz * t));
      }
      break;
    case SynthKind::kWhiteNoise: {
      Xoshiro256ss rng(spec.seed);
      for (size_t i = 0; i < n; ++i) {
        wav.samples[i] =
            static_cast<float>(spec.amplitude * (2.0 * rng.Uniform() - 1.0));
      }
      break;
    }
  }
  return wav;
}

}  // namespace nest
