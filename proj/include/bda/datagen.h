// bda/datagen.h

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
#include <string>
#include <utility>
#include <vector>

#include "bda/network.h"

namespace bda {

// Per-speaker diagonal-affine feature distortion x = scale (*) g + bias.
// Diagonal-affine by construction so a multiplicative (LHUC) and an additive
// (HUB) transform each have a realizable oracle inverse.
struct SpeakerTransform {
  std::vector<double> diag_scale;
  std::vector<double> bias;
};

struct ClassModel {
  std::vector<std::vector<double>> means;   // per class
  std::vector<std::vector<double>> sigmas;  // per class, diagonal stddevs
};

struct GenConfig {
  int num_classes = 20;
  int feature_dim = 24;
  int train_speakers = 50;
  int test_speakers = 10;
  int utterances_per_speaker = 40;
  int frames_per_utterance = 50;
  std::vector<double> class_priors;  // empty = uniform
  double class_mean_std = 0.8;       // used when class_model is empty
  double class_sigma = 1.0;
  double distortion_log_scale_min = -0.7;
  double distortion_log_scale_max = 0.7;
  double distortion_bias_std = 0.3;
  ClassModel class_model;  // optional explicit model

  void validate() const;
};

struct Utterance {
  Matrix frames;
  std::vector<int> labels;
};

struct SpeakerData {
  std::string speaker_id;
  bool test = false;
  SpeakerTransform transform;
  std::vector<Utterance> utterances;

  int num_utterances() const { return static_cast<int>(utterances.size()); }
  LabeledFrames flatten(int utt_begin, int utt_end) const;
  LabeledFrames flatten() const { return flatten(0, num_utterances()); }
};

struct Corpus {
  GenConfig cfg;
  uint64_t seed = 0;
  ClassModel class_model;
  std::vector<SpeakerData> speakers;

  std::vector<LabeledFrames> train_frames() const;
  std::vector<const SpeakerData*> test_speakers() const;
  const SpeakerData& speaker(const std::string& id) const;
};

// Deterministic per seed; every speaker draws from an independent derived
// stream, so the corpus is stable under speaker-count changes.
Corpus generate_corpus(const GenConfig& cfg, uint64_t seed);

enum class SplitMode {
  kAdaptOnEval,  // adaptation = first n utterances, evaluation = all utterances
  kDisjoint,     // adaptation = first n, evaluation = the rest
};

std::pair<LabeledFrames, LabeledFrames> budget_split(const SpeakerData& speaker, int n_utterances,
                                                     SplitMode mode = SplitMode::kAdaptOnEval);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace bda
