// bda/adapt_bayes.cc

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

#include "bda/adapt_bayes.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace bda {

double default_lambda(int n_layers) {
  if (n_layers < 1) throw ConfigError("default_lambda: n must be >= 1");
  if (n_layers >= 5) return 1.0;
  double p = 1.0;
  for (int i = 0; i < 5 - n_layers; ++i) p *= 10.0;  // exact up to 10^4
  return 1.0 / p;
}

Posterior init_posterior(const AdaptMethod& method, const PriorSpec& prior, bool tied) {
  Posterior post;
  post.variant = method.variant;
  for (int l : method.layers) {
    const PriorSpec::LayerPrior& lp = prior.at(l);
    Posterior::LayerPosterior p;
    p.mu = lp.mu0;
    p.tied = tied;
    if (tied) {
      double mean = 0.0;
      for (double s : lp.sigma0) mean += s;
      p.sigma.assign(1, mean / static_cast<double>(lp.sigma0.size()));
    } else {
      p.sigma = lp.sigma0;
    }
    post.layers[l] = std::move(p);
  }
  return post;
}

SdParams posterior_mean(const Posterior& posterior) {
  SdParams p;
  p.variant = posterior.variant;
  for (const auto& [l, lp] : posterior.layers) p.layer_values[l] = lp.mu;
  return p;
}

double posterior_kl(const Posterior& posterior, const PriorSpec& prior) {
  double kl = 0.0;
  for (const auto& [l, lp] : posterior.layers) {
    const PriorSpec::LayerPrior& pr = prior.at(l);
    GaussianSpec q{lp.mu, lp.sigma};
    GaussianSpec p0{pr.mu0, pr.sigma0};
    kl += kl_diag_gaussian(q, p0);
  }
  return kl;
}

PosteriorDraw sample_posterior(const Posterior& posterior, RandomStream& stream) {
  PosteriorDraw out;
  out.params.variant = posterior.variant;
  for (const auto& [l, lp] : posterior.layers) {
    GaussianSpec spec{lp.mu, lp.sigma};
    GaussianDraw draw = gaussian_draw(stream, spec);
    out.params.layer_values[l] = std::move(draw.value);
    out.epsilon[l] = std::move(draw.epsilon);
  }
  return out;
}

void elbo_step(const Network& net, const Matrix& batch_frames, const Labels& batch_labels,
               double total_frames, const AdaptMethod& method, const PriorSpec& prior,
               const BayesHyper& hyper, double learning_rate, double lambda,
               Posterior& posterior, RandomStream& stream, ElboStepDiag* diag) {
  if (batch_frames.rows == 0) throw ConfigError("elbo_step: empty batch");
  if (hyper.j_est < 1) throw ConfigError("elbo_step: j_est must be >= 1");

  // Accumulate sum_j G_jd and sum_j G_jd * eps_jd over the J samples.
  std::map<int, std::vector<double>> g_sum, geps_sum;
  for (const auto& [l, lp] : posterior.layers) {
    g_sum[l].assign(lp.mu.size(), 0.0);
    geps_sum[l].assign(lp.mu.size(), 0.0);
  }

  double ce_acc = 0.0;
  for (int j = 0; j < hyper.j_est; ++j) {
    const PosteriorDraw draw = sample_posterior(posterior, stream);
    Adaptor ad{&method, &draw.params};
    const ForwardTrace tr = forward(net, batch_frames, &ad);
    ce_acc += ce_sum(tr.probs, batch_labels);
    const Gradients grads = backward(net, tr, batch_labels, &ad);
    const SdParams g = sd_gradient(method, draw.params, tr, grads);
    for (const auto& [l, gl] : g.layer_values) {
      const std::vector<double>& eps = draw.epsilon.at(l);
      std::vector<double>& gs = g_sum[l];
      std::vector<double>& ge = geps_sum[l];
      for (size_t i = 0; i < gl.size(); ++i) {
        gs[i] += gl[i];
        ge[i] += gl[i] * eps[i];
      }
    }
  }
  if (diag) diag->mean_sampled_ce = ce_acc / hyper.j_est;

  const double scale = total_frames / batch_frames.rows / hyper.j_est;
  for (auto& [l, lp] : posterior.layers) {
    const PriorSpec::LayerPrior& pr = prior.at(l);
    const std::vector<double>& gs = g_sum[l];
    const std::vector<double>& ge = geps_sum[l];
    const size_t n = lp.mu.size();

    // Downward sigma steps land on the (degenerate, stable) floor at worst;
    // only growth needs bounding, or the 1/sigma KL term evaluated at the
    // floor catapults sigma upward by lr*lambda/floor.
    auto clip_sigma_step = [&](double step, double s0_ref) {
      if (hyper.sigma_step_limit <= 0.0) return step;
      return std::max(step, -hyper.sigma_step_limit * s0_ref);
    };

    double tied_sigma_grad = 0.0;
    double sigma0_mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double s0 = pr.sigma0[i];
      sigma0_mean += s0;
      const double gmu = scale * gs[i] + lambda * (lp.mu[i] - pr.mu0[i]) / (s0 * s0);
      if (!hyper.freeze_sigma) {
        const double sigma = lp.tied ? lp.sigma[0] : lp.sigma[i];
        const double kl_term =
            lambda == 0.0 ? 0.0
                          : lambda * (sigma / (s0 * s0) - 1.0 / std::max(sigma, kSigmaFloor));
        const double gsig = scale * ge[i] + kl_term;
        if (lp.tied)
          tied_sigma_grad += gsig;
        else
          lp.sigma[i] = std::max(
              lp.sigma[i] - clip_sigma_step(learning_rate * gsig, s0), kSigmaFloor);
      }
      double mu_step = learning_rate * gmu;
      if (hyper.mu_step_limit > 0.0) {
        const double cap = hyper.mu_step_limit * s0;
        mu_step = std::clamp(mu_step, -cap, cap);
      }
      lp.mu[i] -= mu_step;
      if (!std::isfinite(lp.mu[i]))
        throw NumericError("elbo_step: non-finite mu update at layer " + std::to_string(l));
    }
    if (!hyper.freeze_sigma && lp.tied) {
      sigma0_mean /= static_cast<double>(n);
      lp.sigma[0] = std::max(
          lp.sigma[0] - clip_sigma_step(learning_rate * tied_sigma_grad, sigma0_mean),
          kSigmaFloor);
    }
    for (double s : lp.sigma)
      if (!std::isfinite(s))
        throw NumericError("elbo_step: non-finite sigma update at layer " + std::to_string(l));
  }
}

BayesAdaptResult adapt_bayes(const Network& net, const LabeledFrames& data,
                             const AdaptMethod& method, const PriorSpec& prior,
                             const BayesHyper& hyper, RandomStream& stream,
                             std::optional<Posterior> initial) {
  data.validate();
  if (data.frames.rows == 0) throw ConfigError("adapt_bayes: empty adaptation set");

  const double lr = hyper.base.learning_rate < 0.0 ? default_adapt_lr(method.variant)
                                                   : hyper.base.learning_rate;
  const double lambda =
      hyper.lambda < 0.0 ? default_lambda(method.num_adapted_layers()) : hyper.lambda;
  const double n_total = static_cast<double>(data.frames.rows);

  std::vector<std::pair<int, int>> batches;
  for (int i = 0; i < data.frames.rows; i += hyper.base.batch_frames)
    batches.emplace_back(i, std::min(i + hyper.base.batch_frames, data.frames.rows));

  BayesAdaptResult res;
  Labels labels = data.labels;

  for (int round = 0; round <= hyper.base.redecode_count; ++round) {
    if (round > 0) {
      const SdParams mean = posterior_mean(res.posterior);
      Adaptor ad{&method, &mean};
      labels = pseudo_label(net, data.frames, hyper.base.supervision, &ad);
    }
    res.posterior = initial ? *initial : init_posterior(method, prior, hyper.tied_sigma);

    for (int epoch = 0; epoch < hyper.base.epochs; ++epoch) {
      double data_term = 0.0;
      for (const auto& [b0, b1] : batches) {
        const Matrix bf = slice_rows(data.frames, b0, b1);
        const Labels bl = labels.slice(b0, b1);
        ElboStepDiag diag;
        elbo_step(net, bf, bl, n_total, method, prior, hyper, lr, lambda, res.posterior, stream,
                  &diag);
        data_term += diag.mean_sampled_ce;
      }
      res.epoch_bound.push_back(data_term +
                                (lambda == 0.0 ? 0.0 : lambda * posterior_kl(res.posterior, prior)));
    }
  }
  return res;
}

Matrix infer_probs(const Network& net, const Matrix& frames, const AdaptMethod& method,
                   const Posterior& posterior, InferenceMode mode, int j_inf,
                   RandomStream& stream) {
  constexpr int kChunk = 4096;
  Matrix probs(frames.rows, net.cfg.num_classes);

  if (mode == InferenceMode::kExpectation) {
    const SdParams mean = posterior_mean(posterior);
    Adaptor ad{&method, &mean};
    for (int b = 0; b < frames.rows; b += kChunk) {
      const int e = std::min(b + kChunk, frames.rows);
      const ForwardTrace tr = forward(net, slice_rows(frames, b, e), &ad);
      for (int t = 0; t < tr.probs.rows; ++t)
        std::copy(tr.probs.row(t), tr.probs.row(t) + tr.probs.cols, probs.row(b + t));
    }
    return probs;
  }

  if (j_inf < 1) throw ConfigError("infer: j_inf must be >= 1 in Monte-Carlo mode");
  for (int j = 0; j < j_inf; ++j) {
    const PosteriorDraw draw = sample_posterior(posterior, stream);
    Adaptor ad{&method, &draw.params};
    for (int b = 0; b < frames.rows; b += kChunk) {
      const int e = std::min(b + kChunk, frames.rows);
      const ForwardTrace tr = forward(net, slice_rows(frames, b, e), &ad);
      for (int t = 0; t < tr.probs.rows; ++t) {
        const double* src = tr.probs.row(t);
        double* dst = probs.row(b + t);
        for (int c = 0; c < probs.cols; ++c) dst[c] += src[c];
      }
    }
  }
  for (double& v : probs.data) v /= j_inf;
  return probs;
}

// ---------------------------------------------------------------------------
// Posterior file I/O

using nlohmann::json;

void save_posterior(const Posterior& posterior, const AdaptMethod& method,
                    const std::string& speaker_id, const std::string& path) {
  json j;
  j["format"] = "bda-posterior";
  j["version"] = 1;
  j["speaker_id"] = speaker_id;
  j["method"] = to_string(method.variant);
  j["activation"] = to_string(method.activation);
  json layers = json::object();
  for (const auto& [l, lp] : posterior.layers) {
    json e;
    e["mu"] = lp.mu;
    e["tied"] = lp.tied;
    if (lp.tied)
      e["sigma"] = lp.sigma[0];
    else
      e["sigma"] = lp.sigma;
    layers[std::to_string(l)] = std::move(e);
  }
  j["layers"] = std::move(layers);
  std::ofstream f(path);
  if (!f) throw IoError("save_posterior: cannot open " + path);
  f << j.dump(1) << "\n";
}

PosteriorFile load_posterior(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_posterior: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("load_posterior: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bda-posterior")
    throw IoError("load_posterior: not a posterior file: " + path);
  PosteriorFile out;
  out.speaker_id = j["speaker_id"].get<std::string>();
  out.method.variant = adapt_variant_from_string(j["method"].get<std::string>());
  out.method.activation = activation_from_string(j["activation"].get<std::string>());
  out.posterior.variant = out.method.variant;
  for (const auto& [key, value] : j["layers"].items()) {
    const int layer = std::stoi(key);
    out.method.layers.push_back(layer);
    Posterior::LayerPosterior lp;
    lp.mu = value["mu"].get<std::vector<double>>();
    lp.tied = value["tied"].get<bool>();
    if (value["sigma"].is_array())
      lp.sigma = value["sigma"].get<std::vector<double>>();
    else
      lp.sigma.assign(1, value["sigma"].get<double>());
    out.posterior.layers[layer] = std::move(lp);
  }
  std::sort(out.method.layers.begin(), out.method.layers.end());
  return out;
}

}  // namespace bda
