// bda/adapt_bayes.h

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

#include <optional>
#include <string>
#include <vector>

#include "bda/adapt_det.h"
#include "bda/network.h"
#include "bda/prior.h"

namespace bda {

// Per-speaker Gaussian variational posterior over the speaker parameters.
// sigma holds one entry per dimension, or a single tied scalar per layer.
struct Posterior {
  AdaptVariant variant = AdaptVariant::kLhuc;
  struct LayerPosterior {
    std::vector<double> mu;
    std::vector<double> sigma;
    bool tied = false;
  };
  std::map<int, LayerPosterior> layers;

  bool operator==(const Posterior& o) const {
    if (variant != o.variant || layers.size() != o.layers.size()) return false;
    for (const auto& [l, lp] : layers) {
      const auto it = o.layers.find(l);
      if (it == o.layers.end() || lp.mu != it->second.mu || lp.sigma != it->second.sigma ||
          lp.tied != it->second.tied)
        return false;
    }
    return true;
  }
};

enum class InferenceMode { kExpectation, kMonteCarlo };

struct BayesHyper {
  AdaptHyper base;
  int j_est = 1;     // reparameterized samples per update
  int j_inf = 16;    // Monte-Carlo inference samples
  double lambda = -1.0;  // < 0 selects min{10^(n-5), 1} for n adapted layers
  InferenceMode inference = InferenceMode::kExpectation;
  bool tied_sigma = true;
  bool freeze_sigma = false;  // keep sigma at its initial value
  // Trust region for the direct sigma update: each upward step is clipped to
  // sigma_step_limit * sigma_0 (per dimension; the sigma_0 mean when tied).
  // Keeps the 1/sigma term of the KL gradient from catapulting sigma off the
  // positivity floor; decreases are never clipped (the floor absorbs them).
  // 0 disables the clip.
  double sigma_step_limit = 0.1;
  // Optional trust region for the mu update, as a fraction of sigma_0 per
  // step. Bounds the random kicks of the sigma-noise exploration phase when
  // batch gradients are large relative to the prior scale. 0 (default)
  // leaves the update unclipped.
  double mu_step_limit = 0.0;
};

// min{10^(n-5), 1}; exact powers of ten.
double default_lambda(int n_layers);

// mu_s = mu_0; sigma_s = sigma_0 (tied: mean of the sigma_0 entries).
Posterior init_posterior(const AdaptMethod& method, const PriorSpec& prior, bool tied);

SdParams posterior_mean(const Posterior& posterior);

// KL(q_s || p_0) summed over layers; tied sigmas broadcast across dimensions
// before the sum.
double posterior_kl(const Posterior& posterior, const PriorSpec& prior);

// Draws r_j = mu + sigma (*) eps_j per layer; returns the flattened values and
// the eps used (needed by the sigma gradient).
struct PosteriorDraw {
  SdParams params;
  std::map<int, std::vector<double>> epsilon;
};
PosteriorDraw sample_posterior(const Posterior& posterior, RandomStream& stream);

// One stochastic update of (mu_s, sigma_s) on a mini-batch:
//   d/dmu_d    = (N_s/N_m)(1/J) sum_j G_jd            + lambda (mu_d - mu0_d)/sigma0_d^2
//   d/dsigma_d = (N_s/N_m)(1/J) sum_j G_jd eps_jd     + lambda (sigma_d/sigma0_d^2 - 1/sigma_d)
// Tied sigma accumulates the sigma gradient over dimensions. Sigma is clamped
// to the positivity floor after the step.
struct ElboStepDiag {
  double mean_sampled_ce = 0.0;  // (1/J) sum_j batch CE at r_j
};
void elbo_step(const Network& net, const Matrix& batch_frames, const Labels& batch_labels,
               double total_frames, const AdaptMethod& method, const PriorSpec& prior,
               const BayesHyper& hyper, double learning_rate, double lambda,
               Posterior& posterior, RandomStream& stream, ElboStepDiag* diag = nullptr);

struct BayesAdaptResult {
  Posterior posterior;
  std::vector<double> epoch_bound;  // sampled data term + lambda * KL, per epoch
};

// Full variational adaptation: init at the prior, then epochs of elbo_step
// over utterance-ordered mini-batches; optional supervision re-generation
// between rounds. initial overrides the init (used by reduction identities).
BayesAdaptResult adapt_bayes(const Network& net, const LabeledFrames& data,
                             const AdaptMethod& method, const PriorSpec& prior,
                             const BayesHyper& hyper, RandomStream& stream,
                             std::optional<Posterior> initial = std::nullopt);

// Expectation inference decodes once at r = mu_s; Monte-Carlo inference
// averages the output probabilities over j_inf posterior draws.
Matrix infer_probs(const Network& net, const Matrix& frames, const AdaptMethod& method,
                   const Posterior& posterior, InferenceMode mode, int j_inf,
                   RandomStream& stream);

void save_posterior(const Posterior& posterior, const AdaptMethod& method,
                    const std::string& speaker_id, const std::string& path);
struct PosteriorFile {
  std::string speaker_id;
  AdaptMethod method;
  Posterior posterior;
};
PosteriorFile load_posterior(const std::string& path);

}  // namespace bda
