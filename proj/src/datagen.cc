// bda/datagen.cc

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

#include "bda/datagen.h"

#include <cmath>
#include <fstream>

#include "bda/numerics.h"
#include "json.hpp"

namespace bda {

void GenConfig::validate() const {
  if (num_classes < 1 || feature_dim < 1 || train_speakers < 1 || test_speakers < 1 ||
      utterances_per_speaker < 1 || frames_per_utterance < 1)
    throw ConfigError("GenConfig: all counts must be >= 1");
  if (!class_priors.empty()) {
    if (static_cast<int>(class_priors.size()) != num_classes)
      throw ConfigError("GenConfig: class_priors size mismatch");
    double sum = 0.0;
    for (double p : class_priors) {
      if (p < 0.0) throw ConfigError("GenConfig: negative class prior");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("GenConfig: class_priors must sum to 1");
  }
  if (distortion_log_scale_min > distortion_log_scale_max)
    throw ConfigError("GenConfig: bad distortion scale range");
  if (class_sigma <= 0.0) throw ConfigError("GenConfig: degenerate covariance");
  if (!class_model.means.empty()) {
    if (static_cast<int>(class_model.means.size()) != num_classes ||
        class_model.sigmas.size() != class_model.means.size())
      throw ConfigError("GenConfig: explicit class model size mismatch");
    for (size_t c = 0; c < class_model.means.size(); ++c) {
      if (static_cast<int>(class_model.means[c].size()) != feature_dim ||
          static_cast<int>(class_model.sigmas[c].size()) != feature_dim)
        throw ConfigError("GenConfig: class model dim mismatch");
      for (double s : class_model.sigmas[c])
        if (s <= 0.0) throw ConfigError("GenConfig: degenerate covariance");
      for (size_t c2 = 0; c2 < c; ++c2)
        if (class_model.means[c] == class_model.means[c2])
          throw ConfigError("GenConfig: class means must be pairwise distinct");
    }
  }
}

LabeledFrames SpeakerData::flatten(int utt_begin, int utt_end) const {
  if (utt_begin < 0 || utt_end < utt_begin || utt_end > num_utterances())
    throw ConfigError("SpeakerData::flatten: bad utterance range");
  int total = 0;
  for (int u = utt_begin; u < utt_end; ++u) total += utterances[u].frames.rows;
  LabeledFrames out;
  out.speaker_id = speaker_id;
  const int dim = utterances.empty() ? 0 : utterances.front().frames.cols;
  out.frames = Matrix(total, dim);
  out.utt_offsets.push_back(0);
  int at = 0;
  for (int u = utt_begin; u < utt_end; ++u) {
    const Utterance& utt = utterances[u];
    for (int t = 0; t < utt.frames.rows; ++t) {
      std::copy(utt.frames.row(t), utt.frames.row(t) + dim, out.frames.row(at + t));
      out.labels.hard.push_back(utt.labels[t]);
    }
    at += utt.frames.rows;
    out.utt_offsets.push_back(at);
  }
  return out;
}

std::vector<LabeledFrames> Corpus::train_frames() const {
  std::vector<LabeledFrames> out;
  for (const SpeakerData& s : speakers)
    if (!s.test) out.push_back(s.flatten());
  return out;
}

std::vector<const SpeakerData*> Corpus::test_speakers() const {
  std::vector<const SpeakerData*> out;
  for (const SpeakerData& s : speakers)
    if (s.test) out.push_back(&s);
  return out;
}

const SpeakerData& Corpus::speaker(const std::string& id) const {
  for (const SpeakerData& s : speakers)
    if (s.speaker_id == id) return s;
  throw ConfigError("Corpus: unknown speaker " + id);
}

namespace {

std::string speaker_name(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, index);
  return buf;
}

int draw_class(RandomStream& stream, const std::vector<double>& priors, int num_classes) {
  const double u = stream.uniform01();
  if (priors.empty()) {
    const int c = static_cast<int>(u * num_classes);
    return c >= num_classes ? num_classes - 1 : c;
  }
  double acc = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    acc += priors[c];
    if (u < acc) return c;
  }
  return num_classes - 1;
}

SpeakerData make_speaker(const GenConfig& cfg, const ClassModel& model, uint64_t seed,
                         const std::string& id, bool test) {
  SpeakerData sp;
  sp.speaker_id = id;
  sp.test = test;
  RandomStream stream = RandomStream::for_speaker(seed, id);

  sp.transform.diag_scale.resize(cfg.feature_dim);
  sp.transform.bias.resize(cfg.feature_dim);
  const double span = cfg.distortion_log_scale_max - cfg.distortion_log_scale_min;
  for (int d = 0; d < cfg.feature_dim; ++d)
    sp.transform.diag_scale[d] = std::exp(cfg.distortion_log_scale_min + span * stream.uniform01());
  for (int d = 0; d < cfg.feature_dim; ++d)
    sp.transform.bias[d] = cfg.distortion_bias_std * stream.gaussian();

  sp.utterances.resize(cfg.utterances_per_speaker);
  for (Utterance& utt : sp.utterances) {
    utt.frames = Matrix(cfg.frames_per_utterance, cfg.feature_dim);
    utt.labels.resize(cfg.frames_per_utterance);
    for (int t = 0; t < cfg.frames_per_utterance; ++t) {
      const int c = draw_class(stream, cfg.class_priors, cfg.num_classes);
      utt.labels[t] = c;
      double* x = utt.frames.row(t);
      for (int d = 0; d < cfg.feature_dim; ++d) {
        const double g = model.means[c][d] + model.sigmas[c][d] * stream.gaussian();
        x[d] = sp.transform.diag_scale[d] * g + sp.transform.bias[d];
      }
    }
  }
  return sp;
}

}  // namespace

Corpus generate_corpus(const GenConfig& cfg, uint64_t seed) {
  cfg.validate();
  Corpus corpus;
  corpus.cfg = cfg;
  corpus.seed = seed;

  if (!cfg.class_model.means.empty()) {
    corpus.class_model = cfg.class_model;
  } else {
    RandomStream cm = RandomStream::for_speaker(seed, "class-model");
    corpus.class_model.means.resize(cfg.num_classes);
    corpus.class_model.sigmas.resize(cfg.num_classes);
    for (int c = 0; c < cfg.num_classes; ++c) {
      corpus.class_model.means[c].resize(cfg.feature_dim);
      corpus.class_model.sigmas[c].assign(cfg.feature_dim, cfg.class_sigma);
      for (int d = 0; d < cfg.feature_dim; ++d)
        corpus.class_model.means[c][d] = cfg.class_mean_std * cm.gaussian();
    }
  }

  for (int s = 0; s < cfg.train_speakers; ++s)
    corpus.speakers.push_back(
        make_speaker(cfg, corpus.class_model, seed, speaker_name("train", s), false));
  for (int s = 0; s < cfg.test_speakers; ++s)
    corpus.speakers.push_back(
        make_speaker(cfg, corpus.class_model, seed, speaker_name("test", s), true));
  return corpus;
}

std::pair<LabeledFrames, LabeledFrames> budget_split(const SpeakerData& speaker, int n_utterances,
                                                     SplitMode mode) {
  const int total = speaker.num_utterances();
  if (n_utterances < 1 || n_utterances > total)
    throw ConfigError("budget_split: n out of range for speaker " + speaker.speaker_id);
  if (mode == SplitMode::kDisjoint && n_utterances == total)
    throw ConfigError("budget_split: disjoint split needs n < total utterances");
  LabeledFrames adapt = speaker.flatten(0, n_utterances);
  LabeledFrames eval = mode == SplitMode::kAdaptOnEval ? speaker.flatten()
                                                       : speaker.flatten(n_utterances, total);
  return {std::move(adapt), std::move(eval)};
}

// ---------------------------------------------------------------------------
// Corpus file I/O

using nlohmann::json;

static json gen_config_to_json(const GenConfig& cfg) {
  json j;
  j["num_classes"] = cfg.num_classes;
  j["feature_dim"] = cfg.feature_dim;
  j["train_speakers"] = cfg.train_speakers;
  j["test_speakers"] = cfg.test_speakers;
  j["utterances_per_speaker"] = cfg.utterances_per_speaker;
  j["frames_per_utterance"] = cfg.frames_per_utterance;
  j["class_priors"] = cfg.class_priors;
  j["class_mean_std"] = cfg.class_mean_std;
  j["class_sigma"] = cfg.class_sigma;
  j["distortion_log_scale_min"] = cfg.distortion_log_scale_min;
  j["distortion_log_scale_max"] = cfg.distortion_log_scale_max;
  j["distortion_bias_std"] = cfg.distortion_bias_std;
  return j;
}

GenConfig gen_config_from_json_obj(const json& j);  // shared with harness config parsing

GenConfig gen_config_from_json_obj(const json& j) {
  GenConfig cfg;
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.train_speakers = j.value("train_speakers", cfg.train_speakers);
  cfg.test_speakers = j.value("test_speakers", cfg.test_speakers);
  cfg.utterances_per_speaker = j.value("utterances_per_speaker", cfg.utterances_per_speaker);
  cfg.frames_per_utterance = j.value("frames_per_utterance", cfg.frames_per_utterance);
  cfg.class_priors = j.value("class_priors", cfg.class_priors);
  cfg.class_mean_std = j.value("class_mean_std", cfg.class_mean_std);
  cfg.class_sigma = j.value("class_sigma", cfg.class_sigma);
  cfg.distortion_log_scale_min = j.value("distortion_log_scale_min", cfg.distortion_log_scale_min);
  cfg.distortion_log_scale_max = j.value("distortion_log_scale_max", cfg.distortion_log_scale_max);
  cfg.distortion_bias_std = j.value("distortion_bias_std", cfg.distortion_bias_std);
  return cfg;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  json j;
  j["format"] = "bda-corpus";
  j["version"] = 1;
  j["gen_config"] = gen_config_to_json(corpus.cfg);
  j["seed"] = corpus.seed;
  j["class_model"] = {{"means", corpus.class_model.means},
                      {"sigmas", corpus.class_model.sigmas}};
  json speakers = json::array();
  for (const SpeakerData& s : corpus.speakers) {
    json sj;
    sj["speaker_id"] = s.speaker_id;
    sj["split"] = s.test ? "test" : "train";
    sj["transform"] = {{"diag_scale", s.transform.diag_scale}, {"bias", s.transform.bias}};
    json utts = json::array();
    for (const Utterance& u : s.utterances)
      utts.push_back({{"frames", u.frames.data},
                      {"rows", u.frames.rows},
                      {"cols", u.frames.cols},
                      {"labels", u.labels}});
    sj["utterances"] = std::move(utts);
    speakers.push_back(std::move(sj));
  }
  j["speakers"] = std::move(speakers);
  std::ofstream f(path);
  if (!f) throw IoError("save_corpus: cannot open " + path);
  f << j.dump() << "\n";
  if (!f) throw IoError("save_corpus: write failed for " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_corpus: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("load_corpus: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bda-corpus") throw IoError("load_corpus: not a corpus file: " + path);
  Corpus corpus;
  corpus.cfg = gen_config_from_json_obj(j["gen_config"]);
  corpus.seed = j["seed"].get<uint64_t>();
  corpus.class_model.means = j["class_model"]["means"].get<std::vector<std::vector<double>>>();
  corpus.class_model.sigmas = j["class_model"]["sigmas"].get<std::vector<std::vector<double>>>();
  for (const json& sj : j["speakers"]) {
    SpeakerData s;
    s.speaker_id = sj["speaker_id"].get<std::string>();
    s.test = sj["split"].get<std::string>() == "test";
    s.transform.diag_scale = sj["transform"]["diag_scale"].get<std::vector<double>>();
    s.transform.bias = sj["transform"]["bias"].get<std::vector<double>>();
    for (const json& uj : sj["utterances"]) {
      Utterance u;
      u.frames.rows = uj["rows"].get<int>();
      u.frames.cols = uj["cols"].get<int>();
      u.frames.data = uj["frames"].get<std::vector<double>>();
      if (u.frames.data.size() != static_cast<size_t>(u.frames.rows) * u.frames.cols)
        throw IoError("load_corpus: frame block size mismatch in " + path);
      u.labels = uj["labels"].get<std::vector<int>>();
      s.utterances.push_back(std::move(u));
    }
    corpus.speakers.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace bda
