// tools/bda.cc

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

// Batch harness for speaker-adaptation experiments:
//   gen-data, train-si, train-sat, adapt, infer, sweep, report.
// Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 I/O failure.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "bda/adapt_bayes.h"
#include "bda/harness.h"
#include "bda/sat.h"
#include "json.hpp"

namespace {

using namespace bda;

std::string default_out_dir() {
  const char* env = std::getenv("BDA_OUTPUT_DIR");
  return env ? std::string(env) : std::string(".");
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (name.find('/') != std::string::npos) return name;  // already a path
  return dir + "/" + name;
}

AdaptMethod make_method(const std::string& variant, const std::string& activation,
                        std::vector<int> layers, int num_hidden) {
  AdaptMethod m;
  m.variant = adapt_variant_from_string(variant);
  if (!activation.empty())
    m.activation = activation_from_string(activation);
  else if (m.variant == AdaptVariant::kHub)
    m.activation = ActivationKind::kTanh;
  if (layers.empty()) {
    if (m.variant == AdaptVariant::kLhuc || m.variant == AdaptVariant::kHub)
      for (int l = 1; l <= num_hidden; ++l) layers.push_back(l);
    else
      layers.push_back(1);
  }
  m.layers = std::move(layers);
  return m;
}

void print_summary(const Summary& s) {
  for (const Summary::Group& g : s.groups)
    std::printf("  %-16s budget %3d: mean %.4f sd %.4f (%d rows)\n", g.method.c_str(), g.budget,
                g.mean_error, g.std_error, g.rows);
  for (const Summary::PairTest& p : s.pairs)
    std::printf("  %-16s vs %-12s budget %3d: p = %.4g\n", p.method.c_str(), p.baseline.c_str(),
                p.budget, p.p_value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic and Bayesian speaker-adaptation harness"};
  app.require_subcommand(1);

  const std::string out_dir = default_out_dir();

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-speaker corpus");
  GenConfig gen_cfg;
  std::string gen_out = join_path(out_dir, "corpus.json");
  uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "corpus output path");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--num-classes", gen_cfg.num_classes);
  gen->add_option("--feature-dim", gen_cfg.feature_dim);
  gen->add_option("--train-speakers", gen_cfg.train_speakers);
  gen->add_option("--test-speakers", gen_cfg.test_speakers);
  gen->add_option("--utterances-per-speaker", gen_cfg.utterances_per_speaker);
  gen->add_option("--frames-per-utterance", gen_cfg.frames_per_utterance);
  gen->add_option("--class-mean-std", gen_cfg.class_mean_std);
  gen->add_option("--class-sigma", gen_cfg.class_sigma);
  gen->add_option("--distortion-log-scale-min", gen_cfg.distortion_log_scale_min);
  gen->add_option("--distortion-log-scale-max", gen_cfg.distortion_log_scale_max);
  gen->add_option("--distortion-bias-std", gen_cfg.distortion_bias_std);

  // train-si ----------------------------------------------------------------
  auto* tsi = app.add_subcommand("train-si", "train the speaker-independent model");
  std::string tsi_corpus, tsi_out = join_path(out_dir, "si.json");
  uint64_t tsi_seed = 1;
  TrainConfig tsi_cfg;
  std::vector<int> tsi_hidden = {96, 96};
  tsi->add_option("--corpus", tsi_corpus, "corpus file")->required();
  tsi->add_option("--out", tsi_out, "model checkpoint output path");
  tsi->add_option("--seed", tsi_seed);
  tsi->add_option("--hidden", tsi_hidden, "hidden layer widths");
  tsi->add_option("--epochs", tsi_cfg.epochs);
  tsi->add_option("--batch-frames", tsi_cfg.batch_frames);
  tsi->add_option("--learning-rate", tsi_cfg.learning_rate);
  tsi->add_option("--plateau-rel-tol", tsi_cfg.plateau_rel_tol);
  tsi->add_option("--plateau-patience", tsi_cfg.plateau_patience);

  // train-sat -----------------------------------------------------------
  auto* tsat = app.add_subcommand("train-sat", "speaker adaptive training");
  std::string sat_corpus, sat_out = join_path(out_dir, "sat.json");
  std::string sat_params_out = join_path(out_dir, "sat_params");
  std::string sat_variant = "LHUC", sat_activation;
  std::vector<int> sat_layers, sat_hidden = {96, 96};
  uint64_t sat_seed = 1;
  TrainConfig sat_tc;
  double sat_sd_lr = 1e-3;
  tsat->add_option("--corpus", sat_corpus)->required();
  tsat->add_option("--out", sat_out, "model checkpoint output path");
  tsat->add_option("--params-out", sat_params_out, "prefix for per-speaker parameter files");
  tsat->add_option("--method", sat_variant, "LHUC|HUB|PAct|LHN");
  tsat->add_option("--activation", sat_activation);
  tsat->add_option("--layers", sat_layers);
  tsat->add_option("--hidden", sat_hidden);
  tsat->add_option("--seed", sat_seed);
  tsat->add_option("--epochs", sat_tc.epochs);
  tsat->add_option("--learning-rate", sat_tc.learning_rate);
  tsat->add_option("--sd-learning-rate", sat_sd_lr);

  // adapt ---------------------------------------------------------------
  auto* ad = app.add_subcommand("adapt", "adapt to one test speaker");
  std::string ad_corpus, ad_model, ad_speaker, ad_out;
  std::string ad_variant = "LHUC", ad_activation;
  std::vector<int> ad_layers;
  bool ad_bayes = false, ad_soft = false;
  bool ad_tied = true;
  int ad_budget = -1, ad_epochs = 7, ad_batch = 64, ad_jest = 1, ad_redecode = 0;
  double ad_lr = -1.0, ad_lambda = -1.0;
  uint64_t ad_seed = 1;
  std::string ad_prior = "fixed", ad_prior_file;
  ad->add_option("--corpus", ad_corpus)->required();
  ad->add_option("--model", ad_model)->required();
  ad->add_option("--speaker", ad_speaker)->required();
  ad->add_option("--out", ad_out, "sdparams/posterior output path");
  ad->add_option("--method", ad_variant);
  ad->add_option("--activation", ad_activation);
  ad->add_option("--layers", ad_layers);
  ad->add_flag("--bayes", ad_bayes, "variational adaptation");
  ad->add_option("--budget", ad_budget, "adaptation utterances (-1 = all)");
  ad->add_option("--epochs", ad_epochs);
  ad->add_option("--batch-frames", ad_batch);
  ad->add_option("--learning-rate", ad_lr);
  ad->add_option("--lambda", ad_lambda);
  ad->add_option("--j-est", ad_jest);
  ad->add_flag("--soft-supervision", ad_soft);
  ad->add_option("--redecode-count", ad_redecode);
  ad->add_option("--tied-sigma", ad_tied);
  ad->add_option("--prior", ad_prior, "fixed|empirical (empirical needs --prior-file)");
  ad->add_option("--prior-file", ad_prior_file);
  ad->add_option("--seed", ad_seed);

  // infer ---------------------------------------------------------------
  auto* inf = app.add_subcommand("infer", "decode a speaker with an adapted model");
  std::string inf_corpus, inf_model, inf_speaker, inf_params, inf_out;
  std::string inf_mode = "expectation";
  int inf_j = 16;
  uint64_t inf_seed = 1;
  inf->add_option("--corpus", inf_corpus)->required();
  inf->add_option("--model", inf_model)->required();
  inf->add_option("--speaker", inf_speaker)->required();
  inf->add_option("--params", inf_params, "sdparams or posterior file (omit for SI decode)");
  inf->add_option("--mode", inf_mode, "expectation|mc");
  inf->add_option("--j-inf", inf_j);
  inf->add_option("--seed", inf_seed);
  inf->add_option("--out", inf_out, "write per-frame labels JSON here");

  // sweep ---------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "run a full experiment sweep from a config file");
  std::string sw_config, sw_out, sw_format;
  int sw_jobs = -1;
  bool sw_det_timing = false;
  sw->add_option("--config", sw_config, "experiment config JSON")->required();
  sw->add_option("--out", sw_out, "override report path");
  sw->add_option("--format", sw_format, "override report format (csv|json)");
  sw->add_option("--jobs", sw_jobs, "override parallel speaker jobs");
  sw->add_flag("--deterministic-timing", sw_det_timing, "write wallclock as 0");

  // report ---------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "recompute the summary of an existing report");
  std::string rep_in, rep_out, rep_format = "csv";
  rep->add_option("--in", rep_in)->required();
  rep->add_option("--out", rep_out, "rewritten report path");
  rep->add_option("--format", rep_format, "output format");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Corpus corpus = generate_corpus(gen_cfg, gen_seed);
      save_corpus(corpus, gen_out);
      long frames = 0;
      for (const SpeakerData& s : corpus.speakers)
        for (const Utterance& u : s.utterances) frames += u.frames.rows;
      std::printf("wrote %s: %zu speakers, %ld frames\n", gen_out.c_str(),
                  corpus.speakers.size(), frames);
      return 0;
    }

    if (*tsi) {
      const Corpus corpus = load_corpus(tsi_corpus);
      tsi_cfg.net.input_dim = corpus.cfg.feature_dim;
      tsi_cfg.net.hidden_dims = tsi_hidden;
      tsi_cfg.net.num_classes = corpus.cfg.num_classes;
      RandomStream stream = RandomStream::for_speaker(tsi_seed, "si-training");
      const SiTrainResult res = train_si(corpus.train_frames(), tsi_cfg, stream);
      save_network(res.net, tsi_out);
      std::printf("trained SI model: %zu epochs, final CE %.4f -> %s\n", res.epoch_ce.size(),
                  res.epoch_ce.empty() ? 0.0 : res.epoch_ce.back(), tsi_out.c_str());
      return 0;
    }

    if (*tsat) {
      const Corpus corpus = load_corpus(sat_corpus);
      sat_tc.net.input_dim = corpus.cfg.feature_dim;
      sat_tc.net.hidden_dims = sat_hidden;
      sat_tc.net.num_classes = corpus.cfg.num_classes;
      const AdaptMethod method = make_method(sat_variant, sat_activation, sat_layers,
                                             static_cast<int>(sat_hidden.size()));
      SatConfig sc;
      sc.train = sat_tc;
      sc.sd_learning_rate = sat_sd_lr;
      RandomStream stream = RandomStream::for_speaker(sat_seed, "sat-training");
      const SatState state = train_sat(corpus.train_frames(), method, sc, stream);
      save_network(state.net, sat_out);
      for (const auto& [spk, params] : state.speaker_params)
        save_sd_params(params, method, spk, sat_params_out + "_" + spk + ".json");
      std::printf("trained SAT model: %zu epochs, final CE %.4f -> %s\n", state.epoch_ce.size(),
                  state.epoch_ce.empty() ? 0.0 : state.epoch_ce.back(), sat_out.c_str());
      return 0;
    }

    if (*ad) {
      const Corpus corpus = load_corpus(ad_corpus);
      const Network net = load_network(ad_model);
      const SpeakerData& sp = corpus.speaker(ad_speaker);
      const AdaptMethod method =
          make_method(ad_variant, ad_activation, ad_layers, net.num_hidden());
      const int budget = ad_budget < 0 ? sp.num_utterances() : ad_budget;
      auto [adapt_set, eval_set] = budget_split(sp, budget);
      LabeledFrames adata;
      adata.frames = std::move(adapt_set.frames);
      adata.labels =
          pseudo_label(net, adata.frames, ad_soft ? LabelMode::kSoft : LabelMode::kHard);
      adata.utt_offsets = adapt_set.utt_offsets;
      adata.speaker_id = adapt_set.speaker_id;

      AdaptHyper hyper;
      hyper.learning_rate = ad_lr;
      hyper.epochs = ad_epochs;
      hyper.batch_frames = ad_batch;
      hyper.supervision = ad_soft ? LabelMode::kSoft : LabelMode::kHard;
      hyper.redecode_count = ad_redecode;
      RandomStream stream = RandomStream::for_speaker(ad_seed, sp.speaker_id);

      if (ad_bayes) {
        PriorSpec prior;
        if (ad_prior == "empirical") {
          if (ad_prior_file.empty()) throw ConfigError("adapt: --prior empirical needs --prior-file");
          prior = load_prior(ad_prior_file);
        } else {
          prior = fixed_prior(method, net);
        }
        BayesHyper bh;
        bh.base = hyper;
        bh.j_est = ad_jest;
        bh.lambda = ad_lambda;
        bh.tied_sigma = ad_tied;
        const BayesAdaptResult res = adapt_bayes(net, adata, method, prior, bh, stream);
        const std::string out =
            ad_out.empty() ? join_path(out_dir, "posterior_" + ad_speaker + ".json") : ad_out;
        save_posterior(res.posterior, method, ad_speaker, out);
        std::printf("adapted (bayes): bound %.4f -> %.4f, wrote %s\n", res.epoch_bound.front(),
                    res.epoch_bound.back(), out.c_str());
      } else {
        const AdaptResult res = adapt_min_ce(net, adata, method, hyper, Regularizer{}, stream);
        const std::string out =
            ad_out.empty() ? join_path(out_dir, "sdparams_" + ad_speaker + ".json") : ad_out;
        save_sd_params(res.params, method, ad_speaker, out);
        std::printf("adapted (min-CE): CE %.4f -> %.4f, wrote %s\n", res.epoch_ce.front(),
                    res.epoch_ce.back(), out.c_str());
      }
      return 0;
    }

    if (*inf) {
      const Corpus corpus = load_corpus(inf_corpus);
      const Network net = load_network(inf_model);
      const SpeakerData& sp = corpus.speaker(inf_speaker);
      const LabeledFrames data = sp.flatten();
      Matrix probs;
      if (inf_params.empty()) {
        probs = forward(net, data.frames).probs;
      } else {
        std::ifstream peek(inf_params);
        if (!peek) throw IoError("infer: cannot open " + inf_params);
        const std::string head((std::istreambuf_iterator<char>(peek)),
                               std::istreambuf_iterator<char>());
        RandomStream stream = RandomStream::for_speaker(inf_seed, sp.speaker_id);
        if (head.find("bda-posterior") != std::string::npos) {
          const PosteriorFile pf = load_posterior(inf_params);
          const InferenceMode mode =
              inf_mode == "mc" ? InferenceMode::kMonteCarlo : InferenceMode::kExpectation;
          probs = infer_probs(net, data.frames, pf.method, pf.posterior, mode, inf_j, stream);
        } else {
          const SdParamsFile sf = load_sd_params(inf_params);
          Adaptor adp{&sf.method, &sf.params};
          probs = forward(net, data.frames, &adp).probs;
        }
      }
      const ErrorStats st = frame_errors(probs, data.labels.hard, data.utt_offsets);
      std::printf("speaker %s: frame error %.4f (%ld/%ld)\n", inf_speaker.c_str(), st.rate(),
                  st.errors, st.frames);
      if (!inf_out.empty()) {
        nlohmann::json j;
        j["speaker_id"] = inf_speaker;
        std::vector<int> labels;
        for (int t = 0; t < probs.rows; ++t)
          labels.push_back(argmax_row(probs.row(t), probs.cols));
        j["labels"] = labels;
        j["frame_error_rate"] = st.rate();
        std::ofstream f(inf_out);
        if (!f) throw IoError("infer: cannot open " + inf_out);
        f << j.dump(1) << "\n";
      }
      return 0;
    }

    if (*sw) {
      ExperimentConfig cfg = load_experiment_config(sw_config);
      if (!sw_out.empty()) cfg.out_path = sw_out;
      if (!sw_format.empty()) cfg.format = sw_format;
      if (sw_jobs >= 0) cfg.jobs = sw_jobs;
      if (sw_det_timing) cfg.deterministic_timing = true;
      if (cfg.out_path.empty())
        cfg.out_path = join_path(out_dir, cfg.format == "json" ? "report.json" : "report.csv");
      long done = 0;
      const std::vector<ResultRow> rows = run_sweep(cfg, [&](const ResultRow& r) {
        ++done;
        std::fprintf(stderr, "[%ld] %s budget %d seed %llu %s: %.4f%s\n", done, r.method.c_str(),
                     r.budget, static_cast<unsigned long long>(r.seed), r.speaker_id.c_str(),
                     r.frame_error_rate, r.failed ? " FAILED" : "");
      });
      emit_report(rows, cfg.out_path, cfg.format);
      std::printf("wrote %zu rows -> %s\n", rows.size(), cfg.out_path.c_str());
      print_summary(summarize(rows));
      return 0;
    }

    if (*rep) {
      const std::vector<ResultRow> rows = parse_report(rep_in);
      if (!rep_out.empty()) {
        emit_report(rows, rep_out, rep_format);
        std::printf("rewrote %zu rows -> %s\n", rows.size(), rep_out.c_str());
      }
      print_summary(summarize(rows));
      return 0;
    }
  } catch (const bda::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const bda::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const bda::IoError& e) {
    std::fprintf(stderr, "I/O failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
