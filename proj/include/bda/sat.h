// bda/sat.h

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

#include "bda/adapt_det.h"
#include "bda/network.h"

namespace bda {

// Speaker adaptive training state: the jointly trained network plus the
// deterministic per-training-speaker parameters (Bayesian treatment is
// reserved for test-time adaptation).
struct SatState {
  Network net;
  std::map<std::string, SdParams> speaker_params;
  std::vector<double> epoch_ce;
};

struct SatConfig {
  TrainConfig train;
  double sd_learning_rate = 1e-3;  // 0 freezes the speaker parameters
};

// Interleaved mini-batch updates: every batch belongs to one speaker and
// updates the shared network (batch-mean gradient, TrainConfig rate) and that
// speaker's parameters (batch-summed gradient, sd_learning_rate) from the same
// backward pass. With sd_learning_rate = 0 this reduces to train_si exactly.
SatState train_sat(const std::vector<LabeledFrames>& speakers, const AdaptMethod& method,
                   const SatConfig& cfg, RandomStream& stream);

}  // namespace bda
