// bda/prior.cc

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

#include "bda/prior.h"

#include <cmath>
#include <fstream>

#include "bda/numerics.h"
#include "json.hpp"

namespace bda {

const PriorSpec::LayerPrior& PriorSpec::at(int layer) const {
  const auto it = layers.find(layer);
  if (it == layers.end())
    throw ConfigError("PriorSpec: no prior for layer " + std::to_string(layer));
  return it->second;
}

PriorSpec fixed_prior(const AdaptMethod& method, const Network& net, double hub_variance) {
  if (hub_variance <= 0.0) throw ConfigError("fixed_prior: hub_variance must be positive");
  PriorSpec p;
  p.source = PriorSpec::Source::kFixed;
  for (int l : method.layers) {
    const int d = net.layer_dim(l);
    const int n = sd_param_count(method.variant, d);
    PriorSpec::LayerPrior lp;
    lp.mu0.resize(n);
    lp.sigma0.resize(n);
    for (int i = 0; i < n; ++i) {
      lp.mu0[i] = neutral_value(method.variant, method.activation, d, i);
      const double var = method.variant == AdaptVariant::kHub ? hub_variance : 1.0;
      lp.sigma0[i] = std::sqrt(var);
    }
    p.layers[l] = std::move(lp);
  }
  return p;
}

PriorSpec empirical_prior(const std::vector<SdParams>& speaker_params) {
  const size_t S = speaker_params.size();
  if (S < 2) throw ConfigError("empirical_prior: needs >= 2 speakers");
  const SdParams& first = speaker_params.front();
  for (const SdParams& p : speaker_params) {
    if (p.variant != first.variant) throw ConfigError("empirical_prior: mixed variants");
    if (p.layer_values.size() != first.layer_values.size())
      throw ConfigError("empirical_prior: mixed layer sets");
  }

  PriorSpec out;
  out.source = PriorSpec::Source::kEmpirical;
  for (const auto& [layer, ref] : first.layer_values) {
    const size_t n = ref.size();
    PriorSpec::LayerPrior lp;
    lp.mu0.assign(n, 0.0);
    lp.sigma0.assign(n, 0.0);
    for (const SdParams& p : speaker_params) {
      const auto it = p.layer_values.find(layer);
      if (it == p.layer_values.end() || it->second.size() != n)
        throw ConfigError("empirical_prior: shape mismatch across speakers");
      for (size_t i = 0; i < n; ++i) lp.mu0[i] += it->second[i];
    }
    for (size_t i = 0; i < n; ++i) lp.mu0[i] /= static_cast<double>(S);
    for (const SdParams& p : speaker_params) {
      const std::vector<double>& v = p.layer_values.at(layer);
      for (size_t i = 0; i < n; ++i) {
        const double d = v[i] - lp.mu0[i];
        lp.sigma0[i] += d * d;
      }
    }
    for (size_t i = 0; i < n; ++i) {
      const double var = std::max(lp.sigma0[i] / static_cast<double>(S), kSigmaFloor);
      lp.sigma0[i] = std::sqrt(var);
    }
    out.layers[layer] = std::move(lp);
  }
  return out;
}

using nlohmann::json;

void save_prior(const PriorSpec& prior, const std::string& path) {
  json j;
  j["format"] = "bda-prior";
  j["version"] = 1;
  j["source"] = prior.source == PriorSpec::Source::kFixed ? "fixed" : "empirical";
  json layers = json::object();
  for (const auto& [l, lp] : prior.layers)
    layers[std::to_string(l)] = {{"mu0", lp.mu0}, {"sigma0", lp.sigma0}};
  j["layers"] = std::move(layers);
  std::ofstream f(path);
  if (!f) throw IoError("save_prior: cannot open " + path);
  f << j.dump(1) << "\n";
}

PriorSpec load_prior(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_prior: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("load_prior: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bda-prior") throw IoError("load_prior: not a prior file: " + path);
  PriorSpec out;
  out.source = j["source"].get<std::string>() == "fixed" ? PriorSpec::Source::kFixed
                                                         : PriorSpec::Source::kEmpirical;
  for (const auto& [key, value] : j["layers"].items()) {
    PriorSpec::LayerPrior lp;
    lp.mu0 = value["mu0"].get<std::vector<double>>();
    lp.sigma0 = value["sigma0"].get<std::vector<double>>();
    if (lp.mu0.size() != lp.sigma0.size())
      throw IoError("load_prior: mu0/sigma0 size mismatch in " + path);
    out.layers[std::stoi(key)] = std::move(lp);
  }
  return out;
}

}  // namespace bda
