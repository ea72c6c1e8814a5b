// tests/test_datagen.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "bda/adapt_det.h"
#include "bda/datagen.h"
#include "doctest.h"

using namespace bda;

TEST_CASE("identity distortion ranges make speakers identically distributed") {
  GenConfig gc;
  gc.num_classes = 4;
  gc.feature_dim = 5;
  gc.train_speakers = 3;
  gc.test_speakers = 1;
  gc.utterances_per_speaker = 2;
  gc.frames_per_utterance = 10;
  gc.distortion_log_scale_min = 0.0;
  gc.distortion_log_scale_max = 0.0;
  gc.distortion_bias_std = 0.0;
  const Corpus corpus = generate_corpus(gc, 11);
  for (const SpeakerData& s : corpus.speakers) {
    for (double sc : s.transform.diag_scale) CHECK(sc == 1.0);
    for (double b : s.transform.bias) CHECK(b == 0.0);
  }
}

TEST_CASE("fixed seed reproduces the corpus bit-exactly") {
  GenConfig gc;
  gc.train_speakers = 2;
  gc.test_speakers = 1;
  gc.utterances_per_speaker = 3;
  gc.frames_per_utterance = 8;
  const Corpus a = generate_corpus(gc, 77);
  const Corpus b = generate_corpus(gc, 77);
  REQUIRE(a.speakers.size() == b.speakers.size());
  for (size_t s = 0; s < a.speakers.size(); ++s) {
    CHECK(a.speakers[s].transform.diag_scale == b.speakers[s].transform.diag_scale);
    for (size_t u = 0; u < a.speakers[s].utterances.size(); ++u) {
      CHECK(a.speakers[s].utterances[u].frames == b.speakers[s].utterances[u].frames);
      CHECK(a.speakers[s].utterances[u].labels == b.speakers[s].utterances[u].labels);
    }
  }
}

TEST_CASE("label marginals match the class prior within 2 percent") {
  GenConfig gc;
  gc.num_classes = 5;
  gc.feature_dim = 4;
  gc.train_speakers = 10;
  gc.test_speakers = 2;
  gc.utterances_per_speaker = 20;
  gc.frames_per_utterance = 50;
  const Corpus corpus = generate_corpus(gc, 13);
  std::vector<long> counts(gc.num_classes, 0);
  long total = 0;
  for (const SpeakerData& s : corpus.speakers)
    for (const Utterance& u : s.utterances)
      for (int c : u.labels) {
        ++counts[c];
        ++total;
      }
  for (long c : counts)
    CHECK(std::abs(static_cast<double>(c) / total - 0.2) < 0.02);
}

TEST_CASE("budget_split modes, nesting, and errors") {
  GenConfig gc;
  gc.train_speakers = 1;
  gc.test_speakers = 1;
  gc.utterances_per_speaker = 8;
  gc.frames_per_utterance = 10;
  const Corpus corpus = generate_corpus(gc, 15);
  const SpeakerData& sp = *corpus.test_speakers()[0];

  auto [a5, e5] = budget_split(sp, 5);
  CHECK(a5.frames.rows == 5 * 10);
  CHECK(e5.frames.rows == 8 * 10);  // adapt-on-eval: full speaker data
  CHECK(a5.num_utterances() == 5);

  auto [a8, e8] = budget_split(sp, 8);
  CHECK(a8.frames.rows == e8.frames.rows);  // n = all

  auto [ad, ed] = budget_split(sp, 5, SplitMode::kDisjoint);
  CHECK(ad.frames.rows == 50);
  CHECK(ed.frames.rows == 30);

  // Nesting: adapt(3) is a prefix of adapt(5).
  auto [a3, e3] = budget_split(sp, 3);
  for (int t = 0; t < a3.frames.rows; ++t)
    for (int d = 0; d < a3.frames.cols; ++d) CHECK(a3.frames.at(t, d) == a5.frames.at(t, d));

  CHECK_THROWS_AS(budget_split(sp, 0), ConfigError);
  CHECK_THROWS_AS(budget_split(sp, 9), ConfigError);
  CHECK_THROWS_AS(budget_split(sp, 8, SplitMode::kDisjoint), ConfigError);
}

TEST_CASE("SI error gap: held-out training speakers vs distorted test speakers") {
  GenConfig gc;
  gc.num_classes = 8;
  gc.feature_dim = 10;
  gc.train_speakers = 12;
  gc.test_speakers = 4;
  gc.utterances_per_speaker = 10;
  gc.frames_per_utterance = 40;
  gc.distortion_log_scale_min = -0.9;
  gc.distortion_log_scale_max = 0.9;
  gc.distortion_bias_std = 0.5;
  const Corpus corpus = generate_corpus(gc, 99);

  // Hold out the last 3 utterances of each training speaker.
  std::vector<LabeledFrames> train_part;
  for (const SpeakerData& s : corpus.speakers)
    if (!s.test) train_part.push_back(s.flatten(0, 7));

  TrainConfig tc;
  tc.net = {10, {24}, 8};
  tc.epochs = 30;
  tc.learning_rate = 0.1;
  tc.momentum = 0.9;
  RandomStream ts = RandomStream::for_speaker(99, "si");
  const SiTrainResult si = train_si(train_part, tc, ts);

  long held_err = 0, held_n = 0, test_err = 0, test_n = 0;
  for (const SpeakerData& s : corpus.speakers) {
    if (!s.test) {
      const LabeledFrames held = s.flatten(7, 10);
      const ErrorStats st =
          frame_errors(forward(si.net, held.frames).probs, held.labels.hard, held.utt_offsets);
      held_err += st.errors;
      held_n += st.frames;
    } else {
      const LabeledFrames all = s.flatten();
      const ErrorStats st =
          frame_errors(forward(si.net, all.frames).probs, all.labels.hard, all.utt_offsets);
      test_err += st.errors;
      test_n += st.frames;
    }
  }
  const double held_rate = static_cast<double>(held_err) / held_n;
  const double test_rate = static_cast<double>(test_err) / test_n;
  CHECK(test_rate > held_rate);  // the train/test mismatch the methods target
}

TEST_CASE("oracle adaptability: 1/scale LHUC at the input reduces CE") {
  GenConfig gc;
  gc.num_classes = 8;
  gc.feature_dim = 10;
  gc.train_speakers = 10;
  gc.test_speakers = 4;
  gc.utterances_per_speaker = 8;
  gc.frames_per_utterance = 40;
  gc.distortion_bias_std = 0.0;  // scale-only distortion
  const Corpus corpus = generate_corpus(gc, 101);

  TrainConfig tc;
  tc.net = {10, {24}, 8};
  tc.epochs = 12;
  RandomStream ts = RandomStream::for_speaker(101, "si");
  const SiTrainResult si = train_si(corpus.train_frames(), tc, ts);

  AdaptMethod m{AdaptVariant::kLhuc, {0}, ActivationKind::kIdentity, false};
  for (const SpeakerData* sp : corpus.test_speakers()) {
    const LabeledFrames data = sp->flatten();
    SdParams oracle;
    oracle.variant = AdaptVariant::kLhuc;
    std::vector<double> inv(gc.feature_dim);
    for (int d = 0; d < gc.feature_dim; ++d) inv[d] = 1.0 / sp->transform.diag_scale[d];
    oracle.layer_values[0] = std::move(inv);

    const double ce_si = ce_sum(forward(si.net, data.frames).probs, data.labels);
    Adaptor ad{&m, &oracle};
    const double ce_oracle = ce_sum(forward(si.net, data.frames, &ad).probs, data.labels);
    CHECK(ce_oracle < ce_si);
  }
}

TEST_CASE("oracle adaptability: minus-bias HUB at the input reduces CE") {
  GenConfig gc;
  gc.num_classes = 8;
  gc.feature_dim = 10;
  gc.train_speakers = 10;
  gc.test_speakers = 4;
  gc.utterances_per_speaker = 8;
  gc.frames_per_utterance = 40;
  gc.distortion_log_scale_min = 0.0;  // bias-only distortion
  gc.distortion_log_scale_max = 0.0;
  gc.distortion_bias_std = 0.8;
  const Corpus corpus = generate_corpus(gc, 102);

  TrainConfig tc;
  tc.net = {10, {24}, 8};
  tc.epochs = 12;
  RandomStream ts = RandomStream::for_speaker(102, "si");
  const SiTrainResult si = train_si(corpus.train_frames(), tc, ts);

  AdaptMethod m{AdaptVariant::kHub, {0}, ActivationKind::kIdentity, false};
  for (const SpeakerData* sp : corpus.test_speakers()) {
    const LabeledFrames data = sp->flatten();
    SdParams oracle;
    oracle.variant = AdaptVariant::kHub;
    std::vector<double> neg(gc.feature_dim);
    for (int d = 0; d < gc.feature_dim; ++d) neg[d] = -sp->transform.bias[d];
    oracle.layer_values[0] = std::move(neg);

    const double ce_si = ce_sum(forward(si.net, data.frames).probs, data.labels);
    Adaptor ad{&m, &oracle};
    const double ce_oracle = ce_sum(forward(si.net, data.frames, &ad).probs, data.labels);
    CHECK(ce_oracle < ce_si);
  }
}

TEST_CASE("corpus file round-trip is bit-exact") {
  GenConfig gc;
  gc.train_speakers = 2;
  gc.test_speakers = 1;
  gc.utterances_per_speaker = 2;
  gc.frames_per_utterance = 6;
  const Corpus corpus = generate_corpus(gc, 55);
  const std::string path = "test_corpus.json";
  save_corpus(corpus, path);
  const Corpus loaded = load_corpus(path);
  CHECK(loaded.seed == corpus.seed);
  CHECK(loaded.class_model.means == corpus.class_model.means);
  REQUIRE(loaded.speakers.size() == corpus.speakers.size());
  for (size_t s = 0; s < corpus.speakers.size(); ++s) {
    CHECK(loaded.speakers[s].speaker_id == corpus.speakers[s].speaker_id);
    CHECK(loaded.speakers[s].test == corpus.speakers[s].test);
    CHECK(loaded.speakers[s].transform.diag_scale == corpus.speakers[s].transform.diag_scale);
    CHECK(loaded.speakers[s].transform.bias == corpus.speakers[s].transform.bias);
    for (size_t u = 0; u < corpus.speakers[s].utterances.size(); ++u) {
      CHECK(loaded.speakers[s].utterances[u].frames == corpus.speakers[s].utterances[u].frames);
      CHECK(loaded.speakers[s].utterances[u].labels == corpus.speakers[s].utterances[u].labels);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("degenerate covariance is rejected") {
  GenConfig gc;
  gc.class_sigma = 0.0;
  CHECK_THROWS_AS(generate_corpus(gc, 1), ConfigError);
}
