// bda/harness.cc

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

#include "bda/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace bda {

void ExperimentConfig::validate() const {
  if (methods.empty() || budgets.empty() || seeds.empty())
    throw ConfigError("ExperimentConfig: needs >= 1 method, budget, and seed");
  if (format != "csv" && format != "json")
    throw ConfigError("ExperimentConfig: format must be csv or json");
  for (const MethodSpec& m : methods)
    if (m.name.find(',') != std::string::npos)
      throw ConfigError("ExperimentConfig: method names must not contain commas");
}

namespace {

std::vector<int> resolve_layers(const AdaptMethod& method, int num_hidden) {
  if (!method.layers.empty()) return method.layers;
  std::vector<int> layers;
  switch (method.variant) {
    case AdaptVariant::kLhuc:
    case AdaptVariant::kHub:
      for (int l = 1; l <= num_hidden; ++l) layers.push_back(l);
      break;
    case AdaptVariant::kPact:
    case AdaptVariant::kLhn:
      layers.push_back(1);
      break;
  }
  return layers;
}

Matrix eval_probs(const Network& net, const Matrix& frames, const Adaptor* adaptor) {
  constexpr int kChunk = 4096;
  Matrix probs(frames.rows, net.cfg.num_classes);
  for (int b = 0; b < frames.rows; b += kChunk) {
    const int e = std::min(b + kChunk, frames.rows);
    const ForwardTrace tr = forward(net, slice_rows(frames, b, e), adaptor);
    for (int t = 0; t < tr.probs.rows; ++t)
      std::copy(tr.probs.row(t), tr.probs.row(t) + tr.probs.cols, probs.row(b + t));
  }
  return probs;
}

std::string method_cache_key(const AdaptMethod& m) {
  std::string key = to_string(m.variant) + ":" + to_string(m.activation) + ":";
  for (int l : m.layers) key += std::to_string(l) + ",";
  return key;
}

// Training-data min-CE estimates of the speaker parameters, for the empirical
// prior.
PriorSpec compute_empirical_prior(const Network& net, const std::vector<LabeledFrames>& train,
                                  const AdaptMethod& method, const AdaptHyper& hyper,
                                  uint64_t seed) {
  std::vector<SdParams> per_speaker;
  per_speaker.reserve(train.size());
  AdaptHyper h = hyper;
  h.redecode_count = 0;  // supervised: true labels, no re-decoding
  for (const LabeledFrames& sp : train) {
    RandomStream stream = RandomStream::for_speaker(seed, "prior:" + sp.speaker_id);
    per_speaker.push_back(adapt_min_ce(net, sp, method, h, Regularizer{}, stream).params);
  }
  return empirical_prior(per_speaker);
}

struct SeedModels {
  SiTrainResult si;
  std::map<std::string, SatState> sat;          // per method cache key
  std::map<std::string, PriorSpec> empirical;   // per method cache key
};

}  // namespace

namespace {

void pooled_for(int jobs, size_t n, const std::function<void(size_t)>& fn) {
  int nthreads = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  if (nthreads < 1) nthreads = 1;
  nthreads = std::min<int>(nthreads, static_cast<int>(n));
  if (nthreads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < nthreads; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, const SweepSink& sink) {
  cfg.validate();
  cfg.train.net.validate();

  Corpus file_corpus;
  const bool from_file = !cfg.corpus_path.empty();
  if (from_file) file_corpus = load_corpus(cfg.corpus_path);

  // Phase 1: per-seed corpora and models, in parallel. Everything is derived
  // from explicit streams, so scheduling cannot change the results.
  struct SeedContext {
    Corpus corpus;
    SeedModels models;
    std::vector<MethodSpec> methods;
  };
  std::vector<SeedContext> contexts(cfg.seeds.size());
  std::vector<std::string> prep_errors(cfg.seeds.size());

  pooled_for(cfg.jobs, cfg.seeds.size(), [&](size_t si) {
    try {
      const uint64_t seed = cfg.seeds[si];
      SeedContext& ctx = contexts[si];
      ctx.corpus = from_file ? file_corpus : generate_corpus(cfg.gen, seed);
      const std::vector<LabeledFrames> train = ctx.corpus.train_frames();
      {
        RandomStream stream = RandomStream::for_speaker(seed, "si-training");
        ctx.models.si = train_si(train, cfg.train, stream);
      }
      const int num_hidden = ctx.models.si.net.num_hidden();
      ctx.methods = cfg.methods;
      for (MethodSpec& m : ctx.methods) {
        if (m.none) continue;
        m.method.layers = resolve_layers(m.method, num_hidden);
        m.bhyper.base = m.hyper;
        const std::string key = method_cache_key(m.method);
        if (m.sat && !ctx.models.sat.count(key)) {
          SatConfig sc;
          sc.train = cfg.train;
          sc.sd_learning_rate = cfg.sat_sd_learning_rate;
          RandomStream stream = RandomStream::for_speaker(seed, "sat-training:" + key);
          ctx.models.sat[key] = train_sat(train, m.method, sc, stream);
        }
        const bool needs_empirical = m.prior_source == PriorSpec::Source::kEmpirical ||
                                     (m.reg.kind == RegKind::kMap &&
                                      m.reg.prior.source == PriorSpec::Source::kEmpirical &&
                                      m.reg.prior.layers.empty());
        if (needs_empirical && !ctx.models.empirical.count(key)) {
          const Network& base = m.sat ? ctx.models.sat.at(key).net : ctx.models.si.net;
          ctx.models.empirical[key] =
              compute_empirical_prior(base, train, m.method, m.hyper, seed);
        }
      }
    } catch (const std::exception& e) {
      prep_errors[si] = e.what();
    }
  });

  // Phase 2: one flat pool over every (seed, method, budget, speaker) job.
  struct Job {
    size_t seed_index;
    const MethodSpec* method;
    int budget;
    const SpeakerData* speaker;
  };
  std::vector<Job> jobs;
  for (size_t si = 0; si < cfg.seeds.size(); ++si) {
    if (!prep_errors[si].empty()) {
      for (const MethodSpec& m : cfg.methods)
        for (int b : cfg.budgets) jobs.push_back({si, &m, b, nullptr});
      continue;
    }
    for (const MethodSpec& m : contexts[si].methods)
      for (int b : cfg.budgets)
        for (const SpeakerData* sp : contexts[si].corpus.test_speakers())
          jobs.push_back({si, &m, b, sp});
  }

  std::vector<ResultRow> rows(jobs.size());
  std::mutex sink_mutex;

  pooled_for(cfg.jobs, jobs.size(), [&](size_t i) {
    const Job& job = jobs[i];
    const MethodSpec& m = *job.method;
    const uint64_t seed = cfg.seeds[job.seed_index];
    ResultRow row;
    row.method = m.name;
    row.budget = job.budget;
    row.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    if (!job.speaker) {
      row.failed = true;
      row.error = "seed preparation failed: " + prep_errors[job.seed_index];
      row.frame_error_rate = std::nan("");
      rows[i] = std::move(row);
      return;
    }
    row.speaker_id = job.speaker->speaker_id;
    const SeedModels& models = contexts[job.seed_index].models;
    try {
      const std::string key = m.none ? "" : method_cache_key(m.method);
      const Network& net = m.sat ? models.sat.at(key).net : models.si.net;
      const int n_utts = job.budget < 0 ? job.speaker->num_utterances() : job.budget;
      auto [adapt, eval] = budget_split(*job.speaker, n_utts, cfg.split_mode);

      Matrix probs;
      if (m.none) {
        probs = eval_probs(net, eval.frames, nullptr);
      } else {
        LabeledFrames adata;
        adata.frames = std::move(adapt.frames);
        adata.labels = pseudo_label(net, adata.frames, m.hyper.supervision);
        adata.utt_offsets = adapt.utt_offsets;
        adata.speaker_id = adapt.speaker_id;

        RandomStream stream = RandomStream::for_speaker(seed, job.speaker->speaker_id);
        if (m.bayes) {
          const PriorSpec prior = m.prior_source == PriorSpec::Source::kEmpirical
                                      ? models.empirical.at(key)
                                      : fixed_prior(m.method, net, m.hub_prior_variance);
          BayesHyper bh = m.bhyper;
          bh.base = m.hyper;
          const BayesAdaptResult r = adapt_bayes(net, adata, m.method, prior, bh, stream);
          probs = infer_probs(net, eval.frames, m.method, r.posterior, bh.inference, bh.j_inf,
                              stream);
        } else {
          Regularizer reg = m.reg;
          if (reg.kind == RegKind::kMap && reg.prior.layers.empty()) {
            reg.prior = reg.prior.source == PriorSpec::Source::kEmpirical
                            ? models.empirical.at(key)
                            : fixed_prior(m.method, net, m.hub_prior_variance);
          }
          const AdaptResult r = adapt_min_ce(net, adata, m.method, m.hyper, reg, stream);
          Adaptor ad{&m.method, &r.params};
          probs = eval_probs(net, eval.frames, &ad);
        }
      }
      const ErrorStats st = frame_errors(probs, eval.labels.hard, eval.utt_offsets);
      row.frame_error_rate = st.rate();
      row.num_frames = st.frames;
      row.utt_errors = st.utt_errors;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      row.frame_error_rate = std::nan("");
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.wallclock_ms = cfg.deterministic_timing
                           ? 0.0
                           : std::chrono::duration<double, std::milli>(t1 - t0).count();
    rows[i] = std::move(row);
    if (sink) {
      std::lock_guard<std::mutex> lock(sink_mutex);
      sink(rows[i]);
    }
  });

  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.budget != b.budget) return a.budget < b.budget;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.speaker_id < b.speaker_id;
  });
  return rows;
}

double matched_pairs_test(const std::vector<int>& errors_a, const std::vector<int>& errors_b) {
  if (errors_a.size() != errors_b.size())
    throw ConfigError("matched_pairs_test: paired vectors must have equal length");
  std::vector<double> d;
  d.reserve(errors_a.size());
  for (size_t i = 0; i < errors_a.size(); ++i) {
    const double di = static_cast<double>(errors_a[i]) - errors_b[i];
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) return 1.0;

  double observed = 0.0;
  for (double v : d) observed += v;
  const double obs_abs = std::abs(observed);

  if (d.size() <= 20) {
    // Exact sign permutation: fraction of sign assignments whose |sum|
    // reaches the observed |sum|.
    const size_t n = d.size();
    const uint64_t total = 1ull << n;
    uint64_t count = 0;
    for (uint64_t mask = 0; mask < total; ++mask) {
      double sum = 0.0;
      for (size_t i = 0; i < n; ++i) sum += (mask >> i) & 1 ? -d[i] : d[i];
      if (std::abs(sum) >= obs_abs - 1e-12) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(total);
  }

  // Normal approximation of the sign-permutation null: Var[sum] = sum d_i^2.
  double var = 0.0;
  for (double v : d) var += v * v;
  const double z = obs_abs / std::sqrt(var);
  return std::erfc(z / std::sqrt(2.0));
}

Summary summarize(const std::vector<ResultRow>& rows) {
  Summary s;
  std::map<std::pair<std::string, int>, std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows)
    if (!r.failed) groups[{r.method, r.budget}].push_back(&r);

  for (const auto& [key, members] : groups) {
    Summary::Group g;
    g.method = key.first;
    g.budget = key.second;
    g.rows = static_cast<int>(members.size());
    double mean = 0.0;
    for (const ResultRow* r : members) mean += r->frame_error_rate;
    mean /= members.size();
    double var = 0.0;
    for (const ResultRow* r : members) {
      const double dd = r->frame_error_rate - mean;
      var += dd * dd;
    }
    g.mean_error = mean;
    g.std_error = members.size() > 1 ? std::sqrt(var / (members.size() - 1)) : 0.0;
    s.groups.push_back(g);
  }

  // Pair "B<name>" with "<name>" (also behind a "SAT " prefix), pooling
  // per-utterance errors aligned by (seed, speaker).
  auto baseline_of = [](const std::string& name) -> std::string {
    std::string prefix, rest = name;
    if (rest.rfind("SAT ", 0) == 0) {
      prefix = "SAT ";
      rest = rest.substr(4);
    }
    if (rest.size() > 1 && rest[0] == 'B') return prefix + rest.substr(1);
    return "";
  };

  for (const auto& [key, members] : groups) {
    const std::string baseline = baseline_of(key.first);
    if (baseline.empty()) continue;
    const auto bit = groups.find({baseline, key.second});
    if (bit == groups.end()) continue;

    std::map<std::pair<uint64_t, std::string>, const ResultRow*> base_rows;
    for (const ResultRow* r : bit->second) base_rows[{r->seed, r->speaker_id}] = r;

    std::vector<int> ea, eb;
    for (const ResultRow* r : members) {
      const auto it = base_rows.find({r->seed, r->speaker_id});
      if (it == base_rows.end() || it->second->utt_errors.size() != r->utt_errors.size())
        continue;
      ea.insert(ea.end(), r->utt_errors.begin(), r->utt_errors.end());
      eb.insert(eb.end(), it->second->utt_errors.begin(), it->second->utt_errors.end());
    }
    if (ea.empty()) continue;
    Summary::PairTest pt;
    pt.method = key.first;
    pt.baseline = baseline;
    pt.budget = key.second;
    pt.p_value = matched_pairs_test(ea, eb);
    s.pairs.push_back(pt);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string render_report(const std::vector<ResultRow>& rows, const std::string& format) {
  if (rows.empty()) throw ConfigError("render_report: no rows");
  const Summary s = summarize(rows);

  if (format == "json") {
    nlohmann::json j;
    j["format"] = "bda-report";
    j["version"] = 1;
    nlohmann::json jr = nlohmann::json::array();
    for (const ResultRow& r : rows) {
      jr.push_back({{"method", r.method},
                    {"budget", r.budget},
                    {"seed", r.seed},
                    {"speaker_id", r.speaker_id},
                    {"frame_error_rate", r.frame_error_rate},
                    {"num_frames", r.num_frames},
                    {"utt_errors", r.utt_errors},
                    {"wallclock_ms", r.wallclock_ms},
                    {"failed", r.failed},
                    {"error", r.error}});
    }
    j["rows"] = std::move(jr);
    nlohmann::json jg = nlohmann::json::array();
    for (const Summary::Group& g : s.groups)
      jg.push_back({{"method", g.method},
                    {"budget", g.budget},
                    {"mean_error", g.mean_error},
                    {"std_error", g.std_error},
                    {"rows", g.rows}});
    nlohmann::json jp = nlohmann::json::array();
    for (const Summary::PairTest& p : s.pairs)
      jp.push_back({{"method", p.method},
                    {"baseline", p.baseline},
                    {"budget", p.budget},
                    {"p_value", p.p_value}});
    j["summary"] = {{"groups", std::move(jg)}, {"pairs", std::move(jp)}};
    return j.dump(1) + "\n";
  }

  if (format != "csv") throw ConfigError("render_report: unknown format " + format);

  std::ostringstream out;
  out << "method,budget,seed,speaker_id,frame_error_rate,num_frames,wallclock_ms\n";
  for (const ResultRow& r : rows) {
    out << r.method << ',' << r.budget << ',' << r.seed << ',' << r.speaker_id << ','
        << fmt_double(r.frame_error_rate) << ',' << r.num_frames << ','
        << fmt_double(r.wallclock_ms) << '\n';
  }
  out << "# summary\n";
  out << "# group,method,budget,mean_error,std_error,rows\n";
  for (const Summary::Group& g : s.groups)
    out << "# group," << g.method << ',' << g.budget << ',' << fmt_double(g.mean_error) << ','
        << fmt_double(g.std_error) << ',' << g.rows << '\n';
  out << "# pair,method,baseline,budget,p_value\n";
  for (const Summary::PairTest& p : s.pairs)
    out << "# pair," << p.method << ',' << p.baseline << ',' << p.budget << ','
        << fmt_double(p.p_value) << '\n';
  return out.str();
}

void emit_report(const std::vector<ResultRow>& rows, const std::string& path,
                 const std::string& format) {
  const std::string text = render_report(rows, format);
  std::ofstream f(path);
  if (!f) throw IoError("emit_report: cannot open " + path);
  f << text;
  if (!f) throw IoError("emit_report: write failed for " + path);
}

std::vector<ResultRow> parse_report_text(const std::string& text, const std::string& format) {
  std::vector<ResultRow> rows;
  if (format == "json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw IoError(std::string("parse_report: bad JSON: ") + e.what());
    }
    if (j.value("format", "") != "bda-report") throw IoError("parse_report: not a report");
    for (const nlohmann::json& rj : j["rows"]) {
      ResultRow r;
      r.method = rj["method"].get<std::string>();
      r.budget = rj["budget"].get<int>();
      r.seed = rj["seed"].get<uint64_t>();
      r.speaker_id = rj["speaker_id"].get<std::string>();
      r.frame_error_rate = rj["frame_error_rate"].is_null()
                               ? std::nan("")
                               : rj["frame_error_rate"].get<double>();
      r.num_frames = rj["num_frames"].get<long>();
      r.utt_errors = rj["utt_errors"].get<std::vector<int>>();
      r.wallclock_ms = rj["wallclock_ms"].get<double>();
      r.failed = rj["failed"].get<bool>();
      r.error = rj["error"].get<std::string>();
      rows.push_back(std::move(r));
    }
    return rows;
  }

  if (format != "csv") throw ConfigError("parse_report: unknown format " + format);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "method,budget,seed,speaker_id,frame_error_rate,num_frames,wallclock_ms")
    throw IoError("parse_report: missing or unexpected CSV header");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string field;
    ResultRow r;
    std::getline(ls, r.method, ',');
    std::getline(ls, field, ',');
    r.budget = std::stoi(field);
    std::getline(ls, field, ',');
    r.seed = std::stoull(field);
    std::getline(ls, r.speaker_id, ',');
    std::getline(ls, field, ',');
    r.frame_error_rate = std::strtod(field.c_str(), nullptr);
    std::getline(ls, field, ',');
    r.num_frames = std::stol(field);
    if (!std::getline(ls, field, ',')) throw IoError("parse_report: short CSV row");
    r.wallclock_ms = std::strtod(field.c_str(), nullptr);
    r.failed = std::isnan(r.frame_error_rate);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> parse_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("parse_report: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();
  const std::string format =
      path.size() >= 5 && path.substr(path.size() - 5) == ".json" ? "json" : "csv";
  return parse_report_text(text, format);
}

// ---------------------------------------------------------------------------
// Experiment config parsing

using nlohmann::json;

// Declared in datagen.cc; reused for the inline corpus block.
GenConfig gen_config_from_json_obj(const json& j);

namespace {

AdaptHyper hyper_from_json(const json& j, AdaptHyper base) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.epochs = j.value("epochs", base.epochs);
  base.batch_frames = j.value("batch_frames", base.batch_frames);
  if (j.contains("supervision")) {
    const std::string s = j["supervision"].get<std::string>();
    if (s == "hard")
      base.supervision = LabelMode::kHard;
    else if (s == "soft")
      base.supervision = LabelMode::kSoft;
    else
      throw ConfigError("config: supervision must be hard or soft");
  }
  base.redecode_count = j.value("redecode_count", base.redecode_count);
  return base;
}

MethodSpec method_from_json(const json& j, const AdaptHyper& defaults) {
  MethodSpec m;
  m.name = j.at("name").get<std::string>();
  if (m.name == "none" || j.value("none", false)) {
    m.none = true;
    return m;
  }
  m.method.variant = adapt_variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("activation"))
    m.method.activation = activation_from_string(j["activation"].get<std::string>());
  else if (m.method.variant == AdaptVariant::kHub)
    m.method.activation = ActivationKind::kTanh;
  if (j.contains("layers")) m.method.layers = j["layers"].get<std::vector<int>>();
  m.method.lhn_random_init = j.value("lhn_random_init", false);
  m.bayes = j.value("bayes", false);
  m.sat = j.value("sat", false);
  m.hyper = hyper_from_json(j, defaults);
  m.hub_prior_variance = j.value("hub_prior_variance", 0.01);
  if (j.contains("prior")) {
    const std::string p = j["prior"].get<std::string>();
    if (p == "fixed")
      m.prior_source = PriorSpec::Source::kFixed;
    else if (p == "empirical")
      m.prior_source = PriorSpec::Source::kEmpirical;
    else
      throw ConfigError("config: prior must be fixed or empirical");
  }
  if (m.bayes) {
    m.bhyper.j_est = j.value("j_est", 1);
    m.bhyper.j_inf = j.value("j_inf", 16);
    m.bhyper.lambda = j.value("lambda", -1.0);
    m.bhyper.tied_sigma = j.value("tied_sigma", true);
    m.bhyper.freeze_sigma = j.value("freeze_sigma", false);
    m.bhyper.sigma_step_limit = j.value("sigma_step_limit", m.bhyper.sigma_step_limit);
    m.bhyper.mu_step_limit = j.value("mu_step_limit", m.bhyper.mu_step_limit);
    if (j.contains("inference")) {
      const std::string inf = j["inference"].get<std::string>();
      if (inf == "expectation")
        m.bhyper.inference = InferenceMode::kExpectation;
      else if (inf == "mc" || inf == "monte_carlo")
        m.bhyper.inference = InferenceMode::kMonteCarlo;
      else
        throw ConfigError("config: inference must be expectation or mc");
    }
  } else if (j.contains("regularizer")) {
    const json& rj = j["regularizer"];
    const std::string kind = rj.at("kind").get<std::string>();
    if (kind == "none") {
      m.reg.kind = RegKind::kNone;
    } else if (kind == "map") {
      m.reg.kind = RegKind::kMap;
      m.reg.weight = rj.value("weight", 1.0);
      m.reg.prior.source = rj.value("prior", std::string("fixed")) == "empirical"
                               ? PriorSpec::Source::kEmpirical
                               : PriorSpec::Source::kFixed;
    } else if (kind == "kl_output") {
      m.reg.kind = RegKind::kKlOutput;
      m.reg.weight = rj.value("weight", 1.0);
    } else if (kind == "noisy") {
      m.reg.kind = RegKind::kNoisy;
      m.reg.noise_mu = rj.value("mu", 0.0);
      m.reg.noise_sigma = rj.value("sigma", 1.0);
    } else {
      throw ConfigError("config: unknown regularizer kind " + kind);
    }
  }
  return m;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j);

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: bad JSON: ") + e.what());
  }
  try {
    return experiment_config_from_json(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("corpus_path")) cfg.corpus_path = j["corpus_path"].get<std::string>();
  if (j.contains("corpus")) cfg.gen = gen_config_from_json_obj(j["corpus"]);

  const json& nj = j.at("network");
  cfg.train.net.input_dim = nj.at("input_dim").get<int>();
  cfg.train.net.hidden_dims = nj.at("hidden_dims").get<std::vector<int>>();
  cfg.train.net.num_classes = nj.at("num_classes").get<int>();

  if (j.contains("train")) {
    const json& tj = j["train"];
    cfg.train.epochs = tj.value("epochs", cfg.train.epochs);
    cfg.train.batch_frames = tj.value("batch_frames", cfg.train.batch_frames);
    cfg.train.learning_rate = tj.value("learning_rate", cfg.train.learning_rate);
    cfg.train.plateau_rel_tol = tj.value("plateau_rel_tol", cfg.train.plateau_rel_tol);
    cfg.train.plateau_patience = tj.value("plateau_patience", cfg.train.plateau_patience);
    cfg.train.init_scale = tj.value("init_scale", cfg.train.init_scale);
  }
  cfg.sat_sd_learning_rate = j.value("sat_sd_learning_rate", cfg.sat_sd_learning_rate);

  AdaptHyper defaults;
  if (j.contains("adapt_defaults")) defaults = hyper_from_json(j["adapt_defaults"], defaults);

  for (const json& mj : j.at("methods")) cfg.methods.push_back(method_from_json(mj, defaults));

  for (const json& bj : j.at("budgets")) {
    if (bj.is_string()) {
      if (bj.get<std::string>() != "all") throw ConfigError("config: bad budget");
      cfg.budgets.push_back(-1);
    } else {
      cfg.budgets.push_back(bj.get<int>());
    }
  }
  cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();

  if (j.contains("split_mode")) {
    const std::string s = j["split_mode"].get<std::string>();
    if (s == "adapt_on_eval")
      cfg.split_mode = SplitMode::kAdaptOnEval;
    else if (s == "disjoint")
      cfg.split_mode = SplitMode::kDisjoint;
    else
      throw ConfigError("config: split_mode must be adapt_on_eval or disjoint");
  }
  cfg.jobs = j.value("jobs", 0);
  cfg.deterministic_timing = j.value("deterministic_timing", false);
  if (j.contains("output")) {
    cfg.out_path = j["output"].value("path", "");
    cfg.format = j["output"].value("format", "csv");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_experiment_config: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_experiment_config(buf.str());
}

}  // namespace bda
