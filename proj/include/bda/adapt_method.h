// bda/adapt_method.h

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

#include "bda/common.h"

namespace bda {

enum class AdaptVariant { kLhuc, kHub, kPact, kLhn };

// Constraint function xi applied to the raw speaker parameters.
//   LHUC scaling: Identity, TwoSigmoid (range (0,2)), Exponential (> 0).
//   HUB bias:     Identity, Tanh.
enum class ActivationKind { kIdentity, kTwoSigmoid, kExponential, kTanh };

// Which transform adapts which layers.
// Layer indices: 0 = the input feature vector (LHUC/HUB only),
// 1..H = hidden layers. LHUC/HUB act on the ReLU-activated hidden vector;
// PAct replaces the ReLU of the layer; LHN multiplies the pre-activation
// (the output of the layer's linear map) by a square speaker matrix.
struct AdaptMethod {
  AdaptVariant variant = AdaptVariant::kLhuc;
  std::vector<int> layers;  // adapted layer indices, ascending
  ActivationKind activation = ActivationKind::kIdentity;
  bool lhn_random_init = false;  // LHN: random instead of identity init

  int num_adapted_layers() const { return static_cast<int>(layers.size()); }
};

// Per-speaker deterministic parameters, flattened per adapted layer:
//   LHUC / HUB: D values.
//   PAct: 2D values, alpha[0..D) then beta[0..D).
//   LHN:  d*d values, row-major.
struct SdParams {
  AdaptVariant variant = AdaptVariant::kLhuc;
  std::map<int, std::vector<double>> layer_values;

  bool operator==(const SdParams& o) const {
    return variant == o.variant && layer_values == o.layer_values;
  }
};

double xi_apply(ActivationKind k, double r);
double xi_deriv(ActivationKind k, double r);

// Neutral parameter value per variant (the point where adaptation is the
// identity): LHUC Identity -> 1, LHUC TwoSigmoid/Exponential -> 0, HUB -> 0,
// PAct -> alpha 1 / beta 0, LHN -> identity matrix.
double neutral_value(AdaptVariant variant, ActivationKind activation, int layer_dim,
                     int flat_index);

// Flattened parameter count for one adapted layer of width layer_dim.
int sd_param_count(AdaptVariant variant, int layer_dim);

// Applies one layer's transform. layer_values is h_t for LHUC/HUB and the
// pre-activation z_t for PAct and LHN; r is that layer's flattened block.
std::vector<double> apply_sd(const AdaptMethod& method, const std::vector<double>& layer_values,
                             const std::vector<double>& r);

// A method bound to concrete parameter values, consumed by the network
// forward/backward passes.
struct Adaptor {
  const AdaptMethod* method = nullptr;
  const SdParams* params = nullptr;

  bool adapts(int layer) const;
  const std::vector<double>& values(int layer) const;
};

std::string to_string(AdaptVariant v);
std::string to_string(ActivationKind k);
AdaptVariant adapt_variant_from_string(const std::string& s);
ActivationKind activation_from_string(const std::string& s);

}  // namespace bda
