// bda/harness.h

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
#include <functional>
#include <string>
#include <vector>

#include "bda/adapt_bayes.h"
#include "bda/adapt_det.h"
#include "bda/datagen.h"
#include "bda/sat.h"

namespace bda {

// One experimental arm: a named adaptation configuration. An empty layers
// list selects the per-variant defaults (LHUC/HUB: all hidden layers,
// PAct/LHN: the first hidden layer).
struct MethodSpec {
  std::string name;
  bool none = false;  // SI baseline, no adaptation
  bool bayes = false;
  bool sat = false;   // adapt on a SAT-trained model instead of the SI model
  AdaptMethod method;
  Regularizer reg;    // deterministic arms only
  PriorSpec::Source prior_source = PriorSpec::Source::kFixed;
  double hub_prior_variance = 0.01;
  AdaptHyper hyper;
  BayesHyper bhyper;  // bayes arms; bhyper.base is replaced by hyper
};

struct ExperimentConfig {
  GenConfig gen;
  std::string corpus_path;  // when set, load this corpus for every seed
  TrainConfig train;
  double sat_sd_learning_rate = 1e-3;
  std::vector<MethodSpec> methods;
  std::vector<int> budgets;  // utterance counts; -1 = all
  std::vector<uint64_t> seeds;
  SplitMode split_mode = SplitMode::kAdaptOnEval;
  int jobs = 0;  // parallel speaker jobs; 0 = hardware concurrency, 1 = serial
  bool deterministic_timing = false;  // write wallclock as 0 for byte-stable reports
  std::string out_path;
  std::string format = "csv";

  void validate() const;
};

struct ResultRow {
  std::string method;
  int budget = 0;
  uint64_t seed = 0;
  std::string speaker_id;
  double frame_error_rate = 0.0;
  long num_frames = 0;
  std::vector<int> utt_errors;  // per-utterance error counts on the eval set
  double wallclock_ms = 0.0;
  bool failed = false;
  std::string error;

  bool operator==(const ResultRow&) const = default;
};

using SweepSink = std::function<void(const ResultRow&)>;

// Full factorial method x budget x seed x test-speaker sweep. Per-speaker jobs
// run concurrently; failures become failed rows and the sweep continues. Rows
// come back ordered by (method, budget, seed, speaker).
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, const SweepSink& sink = nullptr);

// Two-sided matched-pairs test on per-utterance error counts: exact sign
// permutation when <= 20 nonzero differences, normal approximation otherwise.
double matched_pairs_test(const std::vector<int>& errors_a, const std::vector<int>& errors_b);

struct Summary {
  struct Group {
    std::string method;
    int budget = 0;
    double mean_error = 0.0;
    double std_error = 0.0;
    int rows = 0;
  };
  struct PairTest {
    std::string method;    // Bayesian / regularized arm
    std::string baseline;  // its deterministic counterpart
    int budget = 0;
    double p_value = 1.0;
  };
  std::vector<Group> groups;
  std::vector<PairTest> pairs;
};

// Per-(method, budget) means and standard deviations over non-failed rows,
// plus matched-pairs p-values of each "B<name>" arm against "<name>".
Summary summarize(const std::vector<ResultRow>& rows);

void emit_report(const std::vector<ResultRow>& rows, const std::string& path,
                 const std::string& format);
std::string render_report(const std::vector<ResultRow>& rows, const std::string& format);
std::vector<ResultRow> parse_report(const std::string& path);
std::vector<ResultRow> parse_report_text(const std::string& text, const std::string& format);

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace bda
