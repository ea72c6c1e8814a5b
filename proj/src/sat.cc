// bda/sat.cc

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

#include "bda/sat.h"

#include <cmath>

namespace bda {

SatState train_sat(const std::vector<LabeledFrames>& speakers, const AdaptMethod& method,
                   const SatConfig& cfg, RandomStream& stream) {
  if (speakers.empty()) throw ConfigError("train_sat: empty corpus");

  cfg.train.net.validate();
  SatState state;
  std::vector<SdParams> params(speakers.size());
  for (size_t s = 0; s < speakers.size(); ++s) {
    params[s].variant = method.variant;
    for (int l : method.layers) {
      const int d = l == 0 ? cfg.train.net.input_dim : cfg.train.net.hidden_dims.at(l - 1);
      const int n = sd_param_count(method.variant, d);
      std::vector<double> v(n);
      for (int i = 0; i < n; ++i) v[i] = neutral_value(method.variant, method.activation, d, i);
      params[s].layer_values[l] = std::move(v);
    }
  }

  TrainHooks hooks;
  hooks.adaptor = [&](int speaker_index) { return Adaptor{&method, &params[speaker_index]}; };
  hooks.sd_update = [&](int speaker_index, const ForwardTrace& tr, const Gradients& g) {
    if (cfg.sd_learning_rate == 0.0) return;
    const SdParams grad = sd_gradient(method, params[speaker_index], tr, g);
    for (auto& [layer, values] : params[speaker_index].layer_values) {
      const std::vector<double>& gl = grad.layer_values.at(layer);
      for (size_t i = 0; i < values.size(); ++i) {
        values[i] -= cfg.sd_learning_rate * gl[i];
        if (!std::isfinite(values[i]))
          throw NumericError("train_sat: non-finite speaker parameter, speaker " +
                             speakers[speaker_index].speaker_id);
      }
    }
  };

  SiTrainResult trained = train_core(speakers, cfg.train, stream, &hooks);
  state.net = std::move(trained.net);
  state.epoch_ce = std::move(trained.epoch_ce);
  for (size_t s = 0; s < speakers.size(); ++s)
    state.speaker_params[speakers[s].speaker_id] = std::move(params[s]);
  return state;
}

}  // namespace bda
