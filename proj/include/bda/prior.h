// bda/prior.h

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

#include <map>
#include <string>
#include <vector>

#include "bda/adapt_method.h"
#include "bda/network.h"

namespace bda {

// Gaussian prior over the speaker parameters, materialized per adapted layer
// with full-length mean and standard-deviation vectors.
struct PriorSpec {
  enum class Source { kFixed, kEmpirical };
  Source source = Source::kFixed;
  struct LayerPrior {
    std::vector<double> mu0;
    std::vector<double> sigma0;
  };
  std::map<int, LayerPrior> layers;

  const LayerPrior& at(int layer) const;
};

// Fixed priors: N(neutral, 1) for LHUC scaling parameters (identity activation
// centers at 1, squashing activations at 0), N(1,1)/N(0,1) for the PAct
// alpha/beta slopes, N(neutral, 1) for LHN matrix entries, and N(0, hub_variance)
// for HUB biases (hub_variance defaults to 0.01).
PriorSpec fixed_prior(const AdaptMethod& method, const Network& net, double hub_variance = 0.01);

// Empirical prior: per-dimension mean and population variance over the
// per-speaker parameter estimates; variance floored at the positivity floor.
// Requires at least two speakers with identical shapes.
PriorSpec empirical_prior(const std::vector<SdParams>& speaker_params);

void save_prior(const PriorSpec& prior, const std::string& path);
PriorSpec load_prior(const std::string& path);

}  // namespace bda
