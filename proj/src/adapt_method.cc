// bda/adapt_method.cc

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

#include "bda/adapt_method.h"

#include <cmath>

namespace bda {

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double xi_apply(ActivationKind k, double r) {
  switch (k) {
    case ActivationKind::kIdentity: return r;
    case ActivationKind::kTwoSigmoid: return 2.0 * sigmoid(r);
    case ActivationKind::kExponential: return std::exp(r);
    case ActivationKind::kTanh: return std::tanh(r);
  }
  throw ConfigError("xi_apply: unknown activation");
}

double xi_deriv(ActivationKind k, double r) {
  switch (k) {
    case ActivationKind::kIdentity: return 1.0;
    case ActivationKind::kTwoSigmoid: {
      const double s = sigmoid(r);
      return 2.0 * s * (1.0 - s);
    }
    case ActivationKind::kExponential: return std::exp(r);
    case ActivationKind::kTanh: {
      const double t = std::tanh(r);
      return 1.0 - t * t;
    }
  }
  throw ConfigError("xi_deriv: unknown activation");
}

double neutral_value(AdaptVariant variant, ActivationKind activation, int layer_dim,
                     int flat_index) {
  switch (variant) {
    case AdaptVariant::kLhuc:
      return activation == ActivationKind::kIdentity ? 1.0 : 0.0;
    case AdaptVariant::kHub:
      return 0.0;
    case AdaptVariant::kPact:
      return flat_index < layer_dim ? 1.0 : 0.0;  // alpha = 1, beta = 0
    case AdaptVariant::kLhn: {
      const int row = flat_index / layer_dim;
      const int col = flat_index % layer_dim;
      return row == col ? 1.0 : 0.0;
    }
  }
  throw ConfigError("neutral_value: unknown variant");
}

int sd_param_count(AdaptVariant variant, int layer_dim) {
  switch (variant) {
    case AdaptVariant::kLhuc:
    case AdaptVariant::kHub: return layer_dim;
    case AdaptVariant::kPact: return 2 * layer_dim;
    case AdaptVariant::kLhn: return layer_dim * layer_dim;
  }
  throw ConfigError("sd_param_count: unknown variant");
}

std::vector<double> apply_sd(const AdaptMethod& method, const std::vector<double>& layer_values,
                             const std::vector<double>& r) {
  const int d = static_cast<int>(layer_values.size());
  if (static_cast<int>(r.size()) != sd_param_count(method.variant, d))
    throw ConfigError("apply_sd: parameter/layer dimension mismatch");

  std::vector<double> out(d);
  switch (method.variant) {
    case AdaptVariant::kLhuc:
      for (int i = 0; i < d; ++i) out[i] = xi_apply(method.activation, r[i]) * layer_values[i];
      break;
    case AdaptVariant::kHub:
      for (int i = 0; i < d; ++i) out[i] = layer_values[i] + xi_apply(method.activation, r[i]);
      break;
    case AdaptVariant::kPact:
      for (int i = 0; i < d; ++i) {
        const double z = layer_values[i];
        out[i] = z > 0.0 ? r[i] * z : r[d + i] * z;
      }
      break;
    case AdaptVariant::kLhn:
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        const double* row = r.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += row[j] * layer_values[j];
        out[i] = acc;
      }
      break;
  }
  return out;
}

bool Adaptor::adapts(int layer) const {
  if (!method || !params) return false;
  for (int l : method->layers)
    if (l == layer) return true;
  return false;
}

const std::vector<double>& Adaptor::values(int layer) const {
  auto it = params->layer_values.find(layer);
  if (it == params->layer_values.end())
    throw ConfigError("Adaptor: no parameters for layer " + std::to_string(layer));
  return it->second;
}

std::string to_string(AdaptVariant v) {
  switch (v) {
    case AdaptVariant::kLhuc: return "LHUC";
    case AdaptVariant::kHub: return "HUB";
    case AdaptVariant::kPact: return "PAct";
    case AdaptVariant::kLhn: return "LHN";
  }
  return "?";
}

std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::kIdentity: return "Identity";
    case ActivationKind::kTwoSigmoid: return "TwoSigmoid";
    case ActivationKind::kExponential: return "Exponential";
    case ActivationKind::kTanh: return "Tanh";
  }
  return "?";
}

AdaptVariant adapt_variant_from_string(const std::string& s) {
  if (s == "LHUC") return AdaptVariant::kLhuc;
  if (s == "HUB") return AdaptVariant::kHub;
  if (s == "PAct") return AdaptVariant::kPact;
  if (s == "LHN") return AdaptVariant::kLhn;
  throw ConfigError("unknown adaptation variant: " + s);
}

ActivationKind activation_from_string(const std::string& s) {
  if (s == "Identity") return ActivationKind::kIdentity;
  if (s == "TwoSigmoid" || s == "2Sigmoid") return ActivationKind::kTwoSigmoid;
  if (s == "Exponential") return ActivationKind::kExponential;
  if (s == "Tanh") return ActivationKind::kTanh;
  throw ConfigError("unknown activation kind: " + s);
}

}  // namespace bda
