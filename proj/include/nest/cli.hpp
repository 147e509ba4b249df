// nest/cli.hpp

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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nest/config.hpp"
#include "nest/log.hpp"
#include "nest/trainer.hpp"

namespace nest::cli {

// Exit codes: 0 success, 1 validation error (bad arguments or config),
// 2 runtime error.
constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

namespace detail {

inline RunConfig LoadConfigOrDefault(const std::string &path) {
  return path.empty() ? RunConfig{} : LoadRunConfig(path);
}

inline void WriteText(const std::filesystem::path &path,
                      const std::string &text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

inline nlohmann::json PlanJson(const AugmentationPlan &plan) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto &s : plan.segments) {
    segs.push_back({{"primary_start", s.primary_start},
                    {"length", s.length},
                    {"source", s.kind == SourceKind::kNoise ? "noise"
                                                            : "speaker"},
                    {"source_id", s.source_id},
                    {"source_offset", s.source_offset},
                    {"snr_db", s.snr_db}});
  }
  return nlohmann::json{{"segments", segs}};
}

// Constant-tone toy corpus: `speakers` distinct tones, each repeated until
// `utterances` files exist, plus a white-noise pool and a ready-to-train
// config. The whole acceptance suite runs off this, no external audio.
inline void SynthData(const std::filesystem::path &out, uint64_t seed,
                      size_t speakers, size_t utterances, double duration,
                      size_t noise_clips, double noise_duration,
                      size_t vocab) {
  std::filesystem::create_directories(out / "audio");
  std::filesystem::create_directories(out / "noise");
  std::vector<ManifestEntry> entries;
  for (size_t i = 0; i < utterances; ++i) {
    const size_t spk = i % speakers;
    SynthSpec spec;
    spec.kind = SynthKind::kTone;
    spec.freq_hz = 250.0 * static_cast<double>(spk + 1);
    spec.duration_s = duration;
    spec.amplitude = 0.5;
    Waveform wav = Synthesize(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%03zu.wav", i);
    SaveWav(out / "audio" / name, wav);
    entries.push_back({std::string("audio/") + name, duration,
                       "spk" + std::to_string(spk)});
  }
  WriteManifest(out / "manifest.jsonl", entries);
  for (size_t i = 0; i < noise_clips; ++i) {
    SynthSpec spec;
    spec.kind = SynthKind::kWhiteNoise;
    spec.duration_s = noise_duration;
    spec.amplitude = 0.3;
    spec.seed = seed + 1000 + i;
    char name[32];
    std::snprintf(name, sizeof(name), "noise_%02zu.wav", i);
    SaveWav(out / "noise" / name, Synthesize(spec));
  }

  RunConfig cfg;
  cfg.train.seed = seed;
  cfg.quantizer.vocab = vocab;
  cfg.encoder.vocab = vocab;
  cfg.paths.manifest = (out / "manifest.jsonl").string();
  cfg.paths.noise_dir = (out / "noise").string();
  cfg.paths.out_dir = (out / "run").string();
  WriteText(out / "run.toml", ToToml(cfg));
  LogInfo("wrote " + std::to_string(utterances) + " utterances, " +
          std::to_string(noise_clips) + " noise clips and run.toml under " +
          out.string());
}

inline nlohmann::json MelJson(const MelSpectrogram &mel) {
  nlohmann::json frames = nlohmann::json::array();
  for (size_t t = 0; t < mel.n_frames; ++t) {
    const auto row = mel.Frame(t);
    frames.push_back(std::vector<float>(row.begin(), row.end()));
  }
  return nlohmann::json{{"source_id", mel.source_id},
                        {"hop_ms", mel.hop_ms},
                        {"n_frames", mel.n_frames},
                        {"n_mels", mel.n_mels},
                        {"frames", frames}};
}

inline nlohmann::json MaskStats(const RunConfig &cfg, size_t frames,
                                size_t trials, uint64_t seed) {
  const int l_m = cfg.mask.l_m;
  const double p_m = cfg.mask.p_m;
  size_t masked = 0, counted = 0;
  for (size_t trial = 0; trial < trials; ++trial) {
    Xoshiro256ss rng = DeriveStream(seed, StreamTag::kMask, {trial});
    const MaskSpec spec = SampleMask(frames, cfg.mask, rng);
    for (size_t i = static_cast<size_t>(l_m) - 1; i < frames; ++i) {
      masked += spec.masked[i];
      ++counted;
    }
  }
  const double empirical =
      static_cast<double>(masked) / static_cast<double>(counted);
  const double analytic = 1.0 - std::pow(1.0 - p_m, l_m);
  return nlohmann::json{{"p_m", p_m},
                        {"l_m", l_m},
                        {"T", frames},
                        {"trials", trials},
                        {"empirical_interior_rate", empirical},
                        {"analytic_interior_rate", analytic}};
}

inline int GradCheckCommand(const RunConfig &cfg, uint64_t seed) {
  SynthSpec spec;
  spec.kind = SynthKind::kWhiteNoise;
  spec.duration_s = 0.4;
  spec.amplitude = 0.5;
  spec.seed = seed;
  const Waveform wav = Synthesize(spec);
  const MelSpectrogram mel = MelSpectrogramOf(wav, cfg.mel);
  Quantizer quant = InitQuantizer(cfg.quantizer.seed, cfg.quantizer.in_dim,
                                  cfg.quantizer.code_dim, cfg.quantizer.vocab);
  quant.cosine = cfg.quantizer.cosine;
  quant.norm_eps = cfg.quantizer.norm_eps;
  const TokenSequence targets = AlignTargets(quant, mel, cfg.align);
  std::vector<size_t> positions(targets.tokens.size());
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  NamedParams params = InitEncoderParams(cfg.encoder, seed);
  const double max_rel =
      GradCheck(params, cfg.encoder, mel, targets, positions, 1e-3, 50, seed);
  const bool pass = max_rel < 1e-4;
  std::cout << nlohmann::json{{"max_rel_err", max_rel},
                              {"threshold", 1e-4},
                              {"pass", pass}}
                   .dump()
            << std::endl;
  return pass ? kOk : kRuntimeError;
}

inline int InspectCheckpoint(const std::filesystem::path &path) {
  Checkpoint ckpt;
  try {
    ckpt = LoadCheckpoint(path);
  } catch (const ChecksumMismatchError &e) {
    std::cout << "crc: FAILED (" << e.what() << ")\n";
    return kRuntimeError;
  }
  std::cout << "crc: ok\n";
  std::cout << "step: " << ckpt.step << "\n";
  std::cout << "rng_state:";
  for (uint64_t s : ckpt.rng_state) std::cout << " " << s;
  std::cout << "\n";
  std::cout << "tensors: " << ckpt.tensors.size() << "\n";
  for (const auto &[name, blob] : ckpt.tensors) {
    std::cout << "  " << name << " [";
    for (size_t i = 0; i < blob.dims.size(); ++i) {
      std::cout << (i > 0 ? ", " : "") << blob.dims[i];
    }
    std::cout << "]\n";
  }
  return kOk;
}

}  // namespace detail

inline int Run(std::vector<std::string> args) {
  CLI::App app{"self-supervised speech pretraining at desk scale"};
  app.require_subcommand(1);

  // synth-data
  auto *synth = app.add_subcommand("synth-data",
                                   "generate the constant-tone toy corpus");
  std::string synth_out = "data";
  uint64_t synth_seed = 7;
  size_t synth_speakers = 8, synth_utts = 64, synth_noise = 4;
  double synth_duration = 1.0, synth_noise_duration = 2.0;
  size_t synth_vocab = 64;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--speakers", synth_speakers, "distinct tones");
  synth->add_option("--utterances", synth_utts, "total utterances");
  synth->add_option("--duration", synth_duration, "utterance seconds");
  synth->add_option("--noise-clips", synth_noise, "noise pool size");
  synth->add_option("--noise-duration", synth_noise_duration,
                    "noise clip seconds");
  synth->add_option("--vocab", synth_vocab, "quantizer vocab for run.toml");

  // featurize
  auto *feat = app.add_subcommand("featurize", "log-mel features of one WAV");
  std::string feat_in, feat_out, feat_config;
  feat->add_option("--in", feat_in, "input WAV")->required();
  feat->add_option("--out", feat_out, "output JSON")->required();
  feat->add_option("--config", feat_config, "TOML run configuration");

  // quantize
  auto *quant_cmd = app.add_subcommand("quantize", "target tokens of one WAV");
  std::string quant_in, quant_out, quant_config;
  std::optional<uint64_t> quant_seed;
  quant_cmd->add_option("--in", quant_in, "input WAV")->required();
  quant_cmd->add_option("--out", quant_out, "output JSON")->required();
  quant_cmd->add_option("--config", quant_config, "TOML run configuration");
  quant_cmd->add_option("--seed", quant_seed, "override the quantizer seed");

  // mask-stats
  auto *mask_cmd = app.add_subcommand("mask-stats",
                                      "empirical vs analytic mask rate");
  std::string mask_config, mask_out;
  size_t mask_frames = 4000, mask_trials = 200;
  uint64_t mask_seed = 0;
  mask_cmd->add_option("--config", mask_config, "TOML run configuration");
  mask_cmd->add_option("--T", mask_frames, "frames per trial");
  mask_cmd->add_option("--trials", mask_trials, "number of trials");
  mask_cmd->add_option("--seed", mask_seed, "RNG seed");
  mask_cmd->add_option("--out", mask_out, "also write the report here");

  // augment-preview
  auto *aug_cmd = app.add_subcommand(
      "augment-preview", "mix one utterance and dump the plan");
  std::string aug_config, aug_out;
  size_t aug_index = 0;
  uint64_t aug_seed = 0;
  aug_cmd->add_option("--config", aug_config, "TOML run configuration")
      ->required();
  aug_cmd->add_option("--index", aug_index, "utterance index");
  aug_cmd->add_option("--seed", aug_seed, "RNG seed");
  aug_cmd->add_option("--out", aug_out, "output directory")->required();

  // grad-check
  auto *grad_cmd = app.add_subcommand("grad-check",
                                      "finite-difference gradient audit");
  std::string grad_config;
  uint64_t grad_seed = 0;
  grad_cmd->add_option("--config", grad_config, "TOML run configuration");
  grad_cmd->add_option("--seed", grad_seed, "RNG seed");

  // pretrain / resume
  auto *pre_cmd = app.add_subcommand("pretrain", "run masked-token pretraining");
  std::string pre_config, pre_out;
  std::optional<size_t> pre_steps;
  std::optional<uint64_t> pre_seed;
  pre_cmd->add_option("--config", pre_config, "TOML run configuration")
      ->required();
  pre_cmd->add_option("--seed", pre_seed, "override train.seed");
  pre_cmd->add_option("--steps", pre_steps, "override train.total_steps");
  pre_cmd->add_option("--out", pre_out, "output directory");

  auto *res_cmd = app.add_subcommand("resume", "continue from a checkpoint");
  std::string res_config, res_out, res_ckpt;
  std::optional<size_t> res_steps;
  std::optional<uint64_t> res_seed;
  res_cmd->add_option("--config", res_config, "TOML run configuration")
      ->required();
  res_cmd->add_option("--resume", res_ckpt, "checkpoint to continue")
      ->required();
  res_cmd->add_option("--seed", res_seed, "override train.seed");
  res_cmd->add_option("--steps", res_steps, "override train.total_steps");
  res_cmd->add_option("--out", res_out, "output directory");

  // inspect-ckpt
  auto *ins_cmd = app.add_subcommand("inspect-ckpt", "walk a checkpoint file");
  std::string ins_path;
  ins_cmd->add_option("path", ins_path, "checkpoint file")->required();

  std::vector<const char *> argv;
  argv.push_back("nest");
  for (const auto &a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (synth->parsed()) {
      detail::SynthData(synth_out, synth_seed, synth_speakers, synth_utts,
                        synth_duration, synth_noise, synth_noise_duration,
                        synth_vocab);
      return kOk;
    }
    if (feat->parsed()) {
      const RunConfig cfg = detail::LoadConfigOrDefault(feat_config);
      ValidateOrThrow(cfg);
      const MelSpectrogram mel = MelSpectrogramOf(LoadWav(feat_in), cfg.mel);
      detail::WriteText(feat_out, detail::MelJson(mel).dump());
      LogInfo("featurized " + feat_in + " -> " + feat_out + " (" +
              std::to_string(mel.n_frames) + " frames)");
      return kOk;
    }
    if (quant_cmd->parsed()) {
      RunConfig cfg = detail::LoadConfigOrDefault(quant_config);
      if (quant_seed) cfg.quantizer.seed = *quant_seed;
      ValidateOrThrow(cfg);
      Quantizer q = InitQuantizer(cfg.quantizer.seed, cfg.quantizer.in_dim,
                                  cfg.quantizer.code_dim, cfg.quantizer.vocab);
      q.cosine = cfg.quantizer.cosine;
      q.norm_eps = cfg.quantizer.norm_eps;
      const MelSpectrogram mel = MelSpectrogramOf(LoadWav(quant_in), cfg.mel);
      const TokenSequence seq = Quantize(q, mel);
      detail::WriteText(
          quant_out,
          nlohmann::json{{"tokens", seq.tokens}, {"rate", seq.rate}}.dump());
      LogInfo("quantized " + quant_in + " -> " + quant_out);
      return kOk;
    }
    if (mask_cmd->parsed()) {
      const RunConfig cfg = detail::LoadConfigOrDefault(mask_config);
      ValidateOrThrow(cfg);
      const auto report =
          detail::MaskStats(cfg, mask_frames, mask_trials, mask_seed);
      std::cout << report.dump() << std::endl;
      if (!mask_out.empty()) detail::WriteText(mask_out, report.dump());
      return kOk;
    }
    if (aug_cmd->parsed()) {
      const RunConfig cfg = LoadRunConfig(aug_config);
      ValidateOrThrow(cfg);
      Quantizer q = InitQuantizer(cfg.quantizer.seed, cfg.quantizer.in_dim,
                                  cfg.quantizer.code_dim, cfg.quantizer.vocab);
      const Corpus corpus = LoadCorpus(cfg, q);
      if (aug_index >= corpus.utts.size()) {
        throw IndexOutOfRangeError("augment-preview: index out of range");
      }
      std::vector<Waveform> pool;
      for (const auto &u : corpus.utts) pool.push_back(u.wav);
      // Preview forces the augmentation gate so the output always shows a mix.
      AugmentConfig forced = cfg.augment;
      forced.p_aug = 1.0;
      Xoshiro256ss rng =
          DeriveStream(aug_seed, StreamTag::kAugment, {aug_index, 0});
      const Waveform &primary = corpus.utts[aug_index].wav;
      AugmentationPlan plan;
      try {
        plan = PlanAugmentation(primary, pool, corpus.noise_pool, forced, rng);
      } catch (const NoEligibleSpeakerError &) {
        forced.p_noise = 1.0;
        forced.p_speech = 0.0;
        plan = PlanAugmentation(primary, pool, corpus.noise_pool, forced, rng);
      }
      const Waveform mixed =
          Mix(primary, plan, MakeResolver(pool, corpus.noise_pool));
      std::filesystem::create_directories(aug_out);
      SaveWav(std::filesystem::path(aug_out) / "augmented.wav", mixed);
      detail::WriteText(std::filesystem::path(aug_out) / "plan.json",
                        detail::PlanJson(plan).dump());
      LogInfo("wrote augmented.wav and plan.json under " + aug_out);
      return kOk;
    }
    if (grad_cmd->parsed()) {
      const RunConfig cfg = detail::LoadConfigOrDefault(grad_config);
      ValidateOrThrow(cfg);
      return detail::GradCheckCommand(cfg, grad_seed);
    }
    if (pre_cmd->parsed() || res_cmd->parsed()) {
      const bool resuming = res_cmd->parsed();
      const RunConfig cfg = LoadRunConfig(resuming ? res_config : pre_config);
      PretrainOptions opts;
      opts.seed = resuming ? res_seed : pre_seed;
      opts.steps = resuming ? res_steps : pre_steps;
      const std::string out = resuming ? res_out : pre_out;
      opts.out_dir = out.empty() ? cfg.paths.out_dir : out;
      if (resuming) opts.resume = res_ckpt;
      const PretrainResult result = RunPretrain(cfg, opts);
      std::cout << MetricsJson(result.last).dump() << std::endl;
      LogInfo("finished at step " + std::to_string(result.final_step) +
              "; metrics: " + result.metrics_path.string());
      return kOk;
    }
    if (ins_cmd->parsed()) {
      return detail::InspectCheckpoint(ins_path);
    }
  } catch (const ConfigValidationError &e) {
    for (const auto &v : e.violations) LogError(v);
    return kValidationError;
  } catch (const toml::ParseError &e) {
    LogError(e.what());
    return kValidationError;
  } catch (const Error &e) {
    LogError(e.what());
    return kRuntimeError;
  } catch (const std::exception &e) {
    LogError(e.what());
    return kRuntimeError;
  }
  return kValidationError;
}

inline int Run(int argc, char **argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return Run(std::move(args));
}

}  // namespace nest::cli
