// nest/trainer.hpp

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
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nest/align.hpp"
#include "nest/augment.hpp"
#include "nest/checkpoint.hpp"
#include "nest/config.hpp"
#include "nest/manifest.hpp"
#include "nest/masking.hpp"
#include "nest/model.hpp"
#include "nest/optim.hpp"
#include "nest/quantizer.hpp"
#include "nest/signal.hpp"

namespace nest {

// The denoising pairing is enforced at the type level: targets are computed
// here from the clean mel, once, and batch construction can only attach them,
// never recompute them from an augmented signal.
struct Utterance {
  Waveform wav;
  MelSpectrogram clean_mel;
  TokenSequence targets;  // output rate, from clean audio only
};

struct Corpus {
  std::vector<Utterance> utts;
  std::vector<Waveform> noise_pool;
};

inline Corpus LoadCorpus(const RunConfig &cfg, const Quantizer &quant) {
  const std::filesystem::path manifest_path = cfg.paths.manifest;
  const auto entries = ReadManifest(manifest_path);
  if (entries.empty()) {
    throw ManifestParseError("manifest " + manifest_path.string() +
                             " is empty");
  }
  const auto base = manifest_path.parent_path();
  Corpus corpus;
  const size_t min_frames =
      std::max(cfg.encoder.ReceptiveField(), cfg.align.factor);
  for (const auto &e : entries) {
    std::filesystem::path p = e.audio_filepath;
    if (p.is_relative()) p = base / p;
    Utterance u;
    try {
      u.wav = LoadWav(p);
    } catch (const NotFoundError &) {
      throw MissingAudioError("missing audio " + p.string());
    }
    u.wav.id = e.audio_filepath;
    u.wav.speaker_id = e.speaker_id;
    u.clean_mel = MelSpectrogramOf(u.wav, cfg.mel);
    if (u.clean_mel.n_frames < min_frames) {
      throw TooShortError("utterance " + u.wav.id + " has " +
                          std::to_string(u.clean_mel.n_frames) +
                          " frames, need >= " + std::to_string(min_frames));
    }
    u.targets = AlignTargets(quant, u.clean_mel, cfg.align);
    corpus.utts.push_back(std::move(u));
  }
  if (!cfg.paths.noise_dir.empty()) {
    if (!std::filesystem::is_directory(cfg.paths.noise_dir)) {
      throw NotFoundError("noise_dir " + cfg.paths.noise_dir +
                          " is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto &entry :
         std::filesystem::directory_iterator(cfg.paths.noise_dir)) {
      if (entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
      Waveform w = LoadWav(f);
      w.id = f.filename().string();
      corpus.noise_pool.push_back(std::move(w));
    }
  }
  if (cfg.augment.p_aug > 0.0 && cfg.augment.p_noise > 0.0 &&
      corpus.noise_pool.empty()) {
    throw InvalidSpecError(
        "noise augmentation enabled but the noise pool is empty");
  }
  return corpus;
}

// Epoch order is a seeded Fisher-Yates shuffle recomputed from
// (seed, epoch); the final short batch of an epoch is dropped. Stateless in
// the step index, which is what makes resume-exact batching trivial.
inline std::vector<size_t> BatchIdsForStep(size_t n_utts,
                                           const TrainConfig &cfg,
                                           size_t step_index) {
  const size_t bpe = n_utts / cfg.batch_size;
  if (bpe == 0) {
    throw InvalidSpecError("batch_size exceeds the corpus size");
  }
  const size_t epoch = step_index / bpe;
  const size_t slot = step_index % bpe;
  std::vector<size_t> order(n_utts);
  for (size_t i = 0; i < n_utts; ++i) order[i] = i;
  Xoshiro256ss rng = DeriveStream(cfg.seed, StreamTag::kShuffle, {epoch});
  for (size_t i = n_utts - 1; i > 0; --i) {
    const size_t j = rng.Below(i + 1);
    std::swap(order[i], order[j]);
  }
  return {order.begin() + slot * cfg.batch_size,
          order.begin() + (slot + 1) * cfg.batch_size};
}

struct BatchItem {
  size_t utt_index = 0;
  const Utterance *clean = nullptr;
  AugmentationPlan plan;
  Waveform augmented;
  MelSpectrogram masked_mel;  // encoder input: augmented, then masked
  MaskSpec mask;
  SelectionMask selection;
};

struct Batch {
  std::vector<BatchItem> items;
};

// Per utterance: plan/mix augmentation on the waveform, featurize, block-mask,
// downsample the mask. RNG streams are keyed by (seed, tag, utterance, step),
// so items are independent and order does not matter.
inline Batch BuildTrainingBatch(const Corpus &corpus,
                                const std::vector<size_t> &ids,
                                const RunConfig &cfg, size_t step_index) {
  std::vector<Waveform> batch_wavs;
  batch_wavs.reserve(ids.size());
  for (size_t id : ids) batch_wavs.push_back(corpus.utts[id].wav);
  const auto resolver = MakeResolver(batch_wavs, corpus.noise_pool);

  Batch batch;
  for (size_t id : ids) {
    const Utterance &utt = corpus.utts[id];
    BatchItem item;
    item.utt_index = id;
    item.clean = &utt;

    Xoshiro256ss aug_rng = DeriveStream(cfg.train.seed, StreamTag::kAugment,
                                        {id, step_index});
    try {
      item.plan = PlanAugmentation(utt.wav, batch_wavs, corpus.noise_pool,
                                   cfg.augment, aug_rng);
    } catch (const NoEligibleSpeakerError &) {
      // Single-speaker batch: retry the draw as noise augmentation so the
      // augmentation rate stays at p_aug.
      AugmentConfig noise_only = cfg.augment;
      noise_only.p_aug = 1.0;
      noise_only.p_noise = 1.0;
      noise_only.p_speech = 0.0;
      item.plan = PlanAugmentation(utt.wav, batch_wavs, corpus.noise_pool,
                                   noise_only, aug_rng);
    }

    const MelSpectrogram *mel_in = &utt.clean_mel;
    MelSpectrogram aug_mel;
    if (!item.plan.Empty()) {
      item.augmented = Mix(utt.wav, item.plan, resolver);
      aug_mel = MelSpectrogramOf(item.augmented, cfg.mel);
      aug_mel.source_id = utt.wav.id;
      mel_in = &aug_mel;
    } else {
      item.augmented = utt.wav;
    }

    Xoshiro256ss mask_rng =
        DeriveStream(cfg.train.seed, StreamTag::kMask, {id, step_index});
    item.mask = SampleMask(mel_in->n_frames, cfg.mask, mask_rng);
    item.masked_mel = ApplyMask(*mel_in, item.mask, cfg.mask);
    item.selection = DownsampleMask(item.mask, cfg.align);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

struct StepMetrics {
  uint64_t step = 0;
  double loss = 0.0;
  double masked_acc = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  uint64_t selected_windows = 0;
  bool skipped = false;
};

struct TrainerState {
  RunConfig cfg;
  uint64_t config_hash = 0;
  Quantizer quant;
  NamedParams params;
  AdamState opt;
  uint64_t step = 0;
  std::array<uint64_t, 4> rng_root{};
};

inline TrainerState InitTrainer(const RunConfig &cfg) {
  ValidateOrThrow(cfg);
  TrainerState st;
  st.cfg = cfg;
  st.config_hash = ConfigHash(cfg);
  st.quant = InitQuantizer(cfg.quantizer.seed, cfg.quantizer.in_dim,
                           cfg.quantizer.code_dim, cfg.quantizer.vocab);
  st.quant.cosine = cfg.quantizer.cosine;
  st.quant.norm_eps = cfg.quantizer.norm_eps;
  st.params = InitEncoderParams(cfg.encoder, cfg.train.seed);
  st.opt = AdamState::For(st.params);
  st.rng_root = DeriveStream(cfg.train.seed, StreamTag::kInit, {0}).State();
  return st;
}

// One optimizer step over a built batch: forward + masked CE per utterance,
// gradients accumulated across items with per-item seeds P_u/P_total so the
// batch loss is the mean over all selected windows, then clip at the global
// norm and apply the decoupled-decay update. A batch with zero selected
// windows advances the step counter but touches nothing else.
inline StepMetrics TrainStep(TrainerState &st, const Batch &batch) {
  const TrainConfig &tc = st.cfg.train;
  const uint64_t new_step = st.step + 1;

  size_t total = 0;
  std::vector<std::vector<size_t>> positions(batch.items.size());
  for (size_t i = 0; i < batch.items.size(); ++i) {
    positions[i] = LossPositions(batch.items[i].selection);
    total += positions[i].size();
  }

  StepMetrics m;
  m.step = new_step;
  m.lr = NoamLr(new_step, tc);
  m.selected_windows = total;
  if (total == 0) {
    m.skipped = true;
    st.step = new_step;
    return m;
  }

  ZeroGrads(st.params);
  double loss_sum = 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < batch.items.size(); ++i) {
    if (positions[i].empty()) continue;
    const BatchItem &item = batch.items[i];
    Tape tape;
    const size_t logits =
        EncoderForward(tape, st.params, item.masked_mel, st.cfg.encoder);
    const auto ce =
        tape.MaskedCe(logits, item.clean->targets.tokens, positions[i]);
    const double weight = static_cast<double>(positions[i].size()) /
                          static_cast<double>(total);
    loss_sum += ce.loss * weight;
    correct += ce.correct;
    tape.Backward(ce.node, weight);
  }
  if (!std::isfinite(loss_sum)) {
    throw NonFiniteLossError("non-finite loss " + std::to_string(loss_sum) +
                             " at step " + std::to_string(new_step));
  }

  m.loss = loss_sum;
  m.masked_acc = static_cast<double>(correct) / static_cast<double>(total);
  m.grad_norm = ClipGradients(st.params, tc.grad_clip_norm);
  if (!std::isfinite(m.grad_norm)) {
    throw NonFiniteLossError("non-finite gradient norm at step " +
                             std::to_string(new_step) + " (loss " +
                             std::to_string(loss_sum) + ")");
  }
  AdamWStep(st.params, st.opt, new_step, m.lr, tc);
  st.step = new_step;
  return m;
}

// ---- checkpointing: encoder params, optimizer moments, frozen quantizer
// tensors, step counter and the RNG root state all ride in one file.

inline Checkpoint MakeCheckpoint(const TrainerState &st) {
  Checkpoint ckpt;
  ckpt.step = st.step;
  ckpt.rng_state = st.rng_root;
  for (const auto &[name, p] : st.params) {
    TensorBlob blob;
    for (size_t s : p.shape) blob.dims.push_back(static_cast<uint32_t>(s));
    blob.data = p.v;
    ckpt.tensors.emplace(name, std::move(blob));
  }
  for (const auto &[name, m] : st.opt.m) {
    TensorBlob blob;
    blob.dims = {static_cast<uint32_t>(m.size())};
    blob.data = m;
    ckpt.tensors.emplace("opt.m." + name, std::move(blob));
  }
  for (const auto &[name, v] : st.opt.v) {
    TensorBlob blob;
    blob.dims = {static_cast<uint32_t>(v.size())};
    blob.data = v;
    ckpt.tensors.emplace("opt.v." + name, std::move(blob));
  }
  {
    TensorBlob proj;
    proj.dims = {static_cast<uint32_t>(st.quant.in_dim),
                 static_cast<uint32_t>(st.quant.code_dim)};
    proj.data = st.quant.projection;
    ckpt.tensors.emplace("quant.projection", std::move(proj));
    TensorBlob code;
    code.dims = {static_cast<uint32_t>(st.quant.vocab),
                 static_cast<uint32_t>(st.quant.code_dim)};
    code.data = st.quant.codebook;
    ckpt.tensors.emplace("quant.codebook", std::move(code));
    ckpt.tensors.emplace("quant.seed", U64Blob(st.quant.seed));
    ckpt.tensors.emplace("config.hash", U64Blob(st.config_hash));
  }
  return ckpt;
}

inline void RestoreTrainer(TrainerState &st, const Checkpoint &ckpt) {
  const auto hash_it = ckpt.tensors.find("config.hash");
  if (hash_it == ckpt.tensors.end() ||
      BlobU64(hash_it->second) != st.config_hash) {
    throw VersionMismatchError(
        "checkpoint was written under a different config");
  }
  auto tensor = [&ckpt](const std::string &name) -> const TensorBlob & {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      throw VersionMismatchError("checkpoint missing tensor " + name);
    }
    return it->second;
  };
  for (auto &[name, p] : st.params) {
    const TensorBlob &blob = tensor(name);
    if (blob.data.size() != p.v.size()) {
      throw VersionMismatchError("checkpoint tensor " + name +
                                 " has wrong size");
    }
    p.v = blob.data;
  }
  for (auto &[name, m] : st.opt.m) m = tensor("opt.m." + name).data;
  for (auto &[name, v] : st.opt.v) v = tensor("opt.v." + name).data;
  st.quant.projection = tensor("quant.projection").data;
  st.quant.codebook = tensor("quant.codebook").data;
  st.quant.seed = BlobU64(tensor("quant.seed"));
  st.step = ckpt.step;
  st.rng_root = ckpt.rng_state;
}

inline nlohmann::json MetricsJson(const StepMetrics &m) {
  return nlohmann::json{{"step", m.step},
                        {"loss", m.loss},
                        {"masked_acc", m.masked_acc},
                        {"grad_norm", m.grad_norm},
                        {"lr", m.lr},
                        {"selected_windows", m.selected_windows}};
}

struct PretrainOptions {
  std::filesystem::path out_dir;
  std::optional<size_t> steps;                   // overrides total_steps
  std::optional<std::filesystem::path> resume;   // checkpoint to continue
  std::optional<uint64_t> seed;                  // overrides train.seed
};

struct PretrainResult {
  uint64_t final_step = 0;
  StepMetrics last;
  std::filesystem::path metrics_path;
  std::filesystem::path final_ckpt;
};

// The full loop: corpus load, per-step batch build + train step, JSONL
// metrics, step{N}.ckpt snapshots (step 0 for fresh runs, every ckpt_every,
// and the last step). All outputs live under out_dir.
inline PretrainResult RunPretrain(RunConfig cfg, const PretrainOptions &opts) {
  if (opts.seed) cfg.train.seed = *opts.seed;
  if (opts.steps) cfg.train.total_steps = *opts.steps;
  ValidateOrThrow(cfg);

  TrainerState st = InitTrainer(cfg);
  if (opts.resume) {
    RestoreTrainer(st, LoadCheckpoint(*opts.resume));
  }
  Corpus corpus = LoadCorpus(cfg, st.quant);
  std::filesystem::create_directories(opts.out_dir);

  auto ckpt_path = [&](uint64_t step) {
    return opts.out_dir / ("step" + std::to_string(step) + ".ckpt");
  };

  PretrainResult result;
  result.metrics_path = opts.out_dir / "metrics.jsonl";
  std::ofstream metrics(result.metrics_path);
  if (!metrics) {
    throw IoError("cannot write " + result.metrics_path.string());
  }
  if (!opts.resume) SaveCheckpoint(MakeCheckpoint(st), ckpt_path(0));

  while (st.step < cfg.train.total_steps) {
    const size_t step_index = st.step;  // 0-based batch cursor
    const auto ids =
        BatchIdsForStep(corpus.utts.size(), cfg.train, step_index);
    const Batch batch = BuildTrainingBatch(corpus, ids, cfg, step_index);
    const StepMetrics m = TrainStep(st, batch);
    metrics << MetricsJson(m).dump() << "\n";
    result.last = m;
    if (st.step % cfg.train.ckpt_every == 0) {
      SaveCheckpoint(MakeCheckpoint(st), ckpt_path(st.step));
    }
  }
  metrics.flush();
  result.final_step = st.step;
  result.final_ckpt = ckpt_path(st.step);
  if (!std::filesystem::exists(result.final_ckpt)) {
    SaveCheckpoint(MakeCheckpoint(st), result.final_ckpt);
  }
  return result;
}

}  // namespace nest
