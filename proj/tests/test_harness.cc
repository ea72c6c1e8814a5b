// tests/test_harness.cc

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

#include "bda/harness.h"
#include "doctest.h"

using namespace bda;

namespace {

// A small but real sweep config: tiny corpus, two seeds, three arms.
ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.gen.num_classes = 5;
  cfg.gen.feature_dim = 6;
  cfg.gen.train_speakers = 4;
  cfg.gen.test_speakers = 2;
  cfg.gen.utterances_per_speaker = 6;
  cfg.gen.frames_per_utterance = 20;
  cfg.gen.class_mean_std = 0.8;
  cfg.train.net = {6, {12}, 5};
  cfg.train.epochs = 6;

  MethodSpec none;
  none.name = "none";
  none.none = true;
  cfg.methods.push_back(none);

  MethodSpec lhuc;
  lhuc.name = "LHUC";
  lhuc.method.variant = AdaptVariant::kLhuc;
  lhuc.hyper.learning_rate = 1e-3;
  lhuc.hyper.epochs = 3;
  cfg.methods.push_back(lhuc);

  MethodSpec blhuc = lhuc;
  blhuc.name = "BLHUC";
  blhuc.bayes = true;
  cfg.methods.push_back(blhuc);

  cfg.budgets = {2, -1};
  cfg.seeds = {11, 12};
  cfg.jobs = 2;
  cfg.deterministic_timing = true;
  return cfg;
}

}  // namespace

TEST_CASE("matched pairs: identical vectors give p = 1") {
  CHECK(matched_pairs_test({3, 1, 4, 1}, {3, 1, 4, 1}) == 1.0);
}

TEST_CASE("matched pairs: all-better over 10 utterances is 2/1024 exactly") {
  std::vector<int> a(10, 1), b(10, 2);  // a strictly better on every utterance
  const double p = matched_pairs_test(a, b);
  CHECK(p == 2.0 / 1024.0);
  CHECK(matched_pairs_test(b, a) == p);  // two-sided symmetry
}

TEST_CASE("matched pairs: length mismatch throws") {
  CHECK_THROWS_AS(matched_pairs_test({1, 2}, {1}), ConfigError);
}

TEST_CASE("matched pairs: normal approximation branch is sane") {
  // 30 nonzero diffs forces the approximation; alternating +-1 is null-like.
  std::vector<int> a(30), b(30);
  for (int i = 0; i < 30; ++i) {
    a[i] = 5;
    b[i] = 5 + (i % 2 == 0 ? 1 : -1);
  }
  const double p = matched_pairs_test(a, b);
  CHECK(p > 0.5);  // balanced differences, no signal
  std::vector<int> c(30, 5), d(30, 7);
  CHECK(matched_pairs_test(c, d) < 1e-6);  // all one-sided, strong signal
}

TEST_CASE("null-case p-value calibration") {
  // Simulated paired utterance error counts with no true difference.
  RandomStream s(2025);
  int hits = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int> a(14), b(14);
    for (int u = 0; u < 14; ++u) {
      // Shared per-utterance difficulty plus independent noise.
      const int base = static_cast<int>(s.next_u64() % 8);
      auto noisy = [&]() {
        int n = base;
        for (int k = 0; k < 6; ++k) n += static_cast<int>(s.next_u64() % 3);
        return n;
      };
      a[u] = noisy();
      b[u] = noisy();
    }
    if (matched_pairs_test(a, b) <= 0.05) ++hits;
  }
  const double rate = static_cast<double>(hits) / trials;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}

TEST_CASE("summarize groups rows and pairs B-arms with their baselines") {
  std::vector<ResultRow> rows;
  for (uint64_t seed : {1ull, 2ull})
    for (const char* m : {"LHUC", "BLHUC"})
      for (const char* spk : {"s1", "s2"}) {
        ResultRow r;
        r.method = m;
        r.budget = 5;
        r.seed = seed;
        r.speaker_id = spk;
        const bool bayes = std::string(m) == "BLHUC";
        r.frame_error_rate = bayes ? 0.2 : 0.3;
        r.num_frames = 100;
        r.utt_errors = bayes ? std::vector<int>{1, 2, 1} : std::vector<int>{3, 4, 2};
        r.wallclock_ms = 0;
        rows.push_back(r);
      }
  const Summary s = summarize(rows);
  REQUIRE(s.groups.size() == 2);
  for (const Summary::Group& g : s.groups) {
    if (g.method == "BLHUC") CHECK(g.mean_error == doctest::Approx(0.2));
    if (g.method == "LHUC") CHECK(g.mean_error == doctest::Approx(0.3));
    CHECK(g.rows == 4);
  }
  REQUIRE(s.pairs.size() == 1);
  CHECK(s.pairs[0].method == "BLHUC");
  CHECK(s.pairs[0].baseline == "LHUC");
  CHECK(s.pairs[0].p_value < 0.05);  // 12 paired utterances, all better
}

TEST_CASE("report round-trips: json full fidelity, csv column fields") {
  std::vector<ResultRow> rows;
  ResultRow r;
  r.method = "BLHUC";
  r.budget = 5;
  r.seed = 42;
  r.speaker_id = "test000";
  r.frame_error_rate = 0.17249999999999999;
  r.num_frames = 2000;
  r.utt_errors = {3, 1, 4};
  r.wallclock_ms = 12.125;
  rows.push_back(r);
  ResultRow f;
  f.method = "LHUC";
  f.budget = 5;
  f.seed = 42;
  f.speaker_id = "test001";
  f.failed = true;
  f.error = "synthetic failure";
  f.frame_error_rate = std::nan("");
  rows.push_back(f);

  const std::string json_text = render_report(rows, "json");
  const std::vector<ResultRow> jback = parse_report_text(json_text, "json");
  REQUIRE(jback.size() == 2);
  CHECK(jback[0] == rows[0]);
  CHECK(jback[1].failed);
  CHECK(jback[1].error == "synthetic failure");

  const std::string csv_text = render_report(rows, "csv");
  CHECK(csv_text.rfind("method,budget,seed,speaker_id,frame_error_rate,num_frames,wallclock_ms\n",
                       0) == 0);
  const std::vector<ResultRow> cback = parse_report_text(csv_text, "csv");
  REQUIRE(cback.size() == 2);
  CHECK(cback[0].method == "BLHUC");
  CHECK(cback[0].budget == 5);
  CHECK(cback[0].seed == 42);
  CHECK(cback[0].speaker_id == "test000");
  CHECK(cback[0].frame_error_rate == rows[0].frame_error_rate);  // %.17g exact
  CHECK(cback[0].num_frames == 2000);
  CHECK(cback[0].wallclock_ms == rows[0].wallclock_ms);
  CHECK(cback[1].failed);
}

TEST_CASE("summary means match a hand recomputation") {
  std::vector<ResultRow> rows;
  const double rates[] = {0.10, 0.20, 0.40, 0.15, 0.35, 0.05};
  for (int i = 0; i < 6; ++i) {
    ResultRow r;
    r.method = "LHUC";
    r.budget = 5;
    r.seed = i;
    r.speaker_id = "s";
    r.frame_error_rate = rates[i];
    r.num_frames = 10;
    rows.push_back(r);
  }
  const Summary s = summarize(rows);
  REQUIRE(s.groups.size() == 1);
  double mean = 0.0;
  for (double v : rates) mean += v;
  mean /= 6;
  double var = 0.0;
  for (double v : rates) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 5);
  CHECK(s.groups[0].mean_error == doctest::Approx(mean).epsilon(1e-15));
  CHECK(s.groups[0].std_error == doctest::Approx(sd).epsilon(1e-12));
}

TEST_CASE("experiment config parses and validates") {
  const std::string text = R"({
    "corpus": {"num_classes": 5, "feature_dim": 6, "train_speakers": 4, "test_speakers": 2,
               "utterances_per_speaker": 6, "frames_per_utterance": 20},
    "network": {"input_dim": 6, "hidden_dims": [12], "num_classes": 5},
    "train": {"epochs": 6, "learning_rate": 0.1},
    "adapt_defaults": {"epochs": 3, "learning_rate": 0.001},
    "methods": [
      {"name": "none"},
      {"name": "LHUC", "variant": "LHUC", "activation": "Identity"},
      {"name": "BLHUC", "variant": "LHUC", "bayes": true, "tied_sigma": true, "lambda": -1},
      {"name": "LHUC-MAP", "variant": "LHUC", "regularizer": {"kind": "map", "weight": 0.5}},
      {"name": "LHUC-noisy", "variant": "LHUC", "regularizer": {"kind": "noisy", "sigma": 0.5}}
    ],
    "budgets": [2, "all"],
    "seeds": [11, 12],
    "jobs": 1,
    "output": {"path": "out.csv", "format": "csv"}
  })";
  const ExperimentConfig cfg = parse_experiment_config(text);
  CHECK(cfg.methods.size() == 5);
  CHECK(cfg.methods[0].none);
  CHECK(cfg.methods[2].bayes);
  CHECK(cfg.methods[3].reg.kind == RegKind::kMap);
  CHECK(cfg.methods[4].reg.kind == RegKind::kNoisy);
  CHECK(cfg.methods[4].reg.noise_sigma == 0.5);
  CHECK(cfg.budgets == std::vector<int>{2, -1});
  CHECK(cfg.methods[1].hyper.epochs == 3);
  CHECK(cfg.methods[1].hyper.learning_rate == 0.001);

  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{}"), ConfigError);
}

TEST_CASE("run_sweep: factorial shape, SI rows budget-invariant, determinism") {
  const ExperimentConfig cfg = small_config();
  const std::vector<ResultRow> rows = run_sweep(cfg);
  // 3 methods x 2 budgets x 2 seeds x 2 speakers
  CHECK(rows.size() == 24);
  for (const ResultRow& r : rows) CHECK_FALSE(r.failed);

  // SI baseline rows do not depend on the budget.
  std::map<std::pair<uint64_t, std::string>, std::vector<double>> si_rates;
  for (const ResultRow& r : rows)
    if (r.method == "none") si_rates[{r.seed, r.speaker_id}].push_back(r.frame_error_rate);
  for (const auto& [key, rates] : si_rates) {
    REQUIRE(rates.size() == 2);
    CHECK(rates[0] == rates[1]);
  }

  // Byte-identical reports across reruns (deterministic timing on).
  const std::vector<ResultRow> rows2 = run_sweep(cfg);
  CHECK(render_report(rows, "csv") == render_report(rows2, "csv"));
  CHECK(render_report(rows, "json") == render_report(rows2, "json"));

  // Serial and parallel execution agree.
  ExperimentConfig serial = cfg;
  serial.jobs = 1;
  const std::vector<ResultRow> rows3 = run_sweep(serial);
  CHECK(render_report(rows, "csv") == render_report(rows3, "csv"));
}

TEST_CASE("run_sweep streams rows to the sink") {
  ExperimentConfig cfg = small_config();
  cfg.methods.resize(1);  // just the SI baseline
  cfg.budgets = {2};
  cfg.seeds = {11};
  int streamed = 0;
  const std::vector<ResultRow> rows = run_sweep(cfg, [&](const ResultRow&) { ++streamed; });
  CHECK(streamed == static_cast<int>(rows.size()));
}

TEST_CASE("emit_report writes files and parse_report reads them back") {
  std::vector<ResultRow> rows;
  ResultRow r;
  r.method = "none";
  r.budget = 1;
  r.seed = 3;
  r.speaker_id = "spk";
  r.frame_error_rate = 0.5;
  r.num_frames = 10;
  r.utt_errors = {5};
  rows.push_back(r);
  emit_report(rows, "test_report.csv", "csv");
  const std::vector<ResultRow> back = parse_report("test_report.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].frame_error_rate == 0.5);
  std::remove("test_report.csv");
  CHECK_THROWS_AS(emit_report(rows, "/nonexistent-dir/x.csv", "csv"), IoError);
}
