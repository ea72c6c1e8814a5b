// bda/adapt_det.h

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

#include <string>
#include <vector>

#include "bda/network.h"
#include "bda/prior.h"

namespace bda {

struct AdaptHyper {
  double learning_rate = -1.0;  // < 0 selects the per-method default
  int epochs = 7;
  int batch_frames = 64;
  LabelMode supervision = LabelMode::kHard;
  int redecode_count = 0;
};

// 0.01 for LHUC/PAct/LHN, 1e-6 for HUB; not normalized by the batch size.
double default_adapt_lr(AdaptVariant variant);

enum class RegKind { kNone, kMap, kKlOutput, kNoisy };

struct Regularizer {
  RegKind kind = RegKind::kNone;
  double weight = 0.0;      // MAP / KL-output
  PriorSpec prior;          // MAP
  double noise_mu = 0.0;    // Noisy: p0 broadcast over dimensions
  double noise_sigma = 0.0;
};

// Parameters at the method's neutral point. LHN may instead be drawn randomly
// (entries ~ N(0, 1/d)); that consumes the stream.
SdParams init_sd_params(const AdaptMethod& method, const Network& net,
                        RandomStream* stream = nullptr);

// G_{m,s,d} = -dlogP/dr_d for the batch behind trace/grads, evaluated at the
// parameters the forward pass used. Shaped like the SdParams.
SdParams sd_gradient(const AdaptMethod& method, const SdParams& at, const ForwardTrace& trace,
                     const Gradients& grads);

struct AdaptResult {
  SdParams params;
  std::vector<double> epoch_ce;  // summed adaptation-set CE per epoch
};

// Minimum-CE estimation: SGD over utterance-ordered contiguous mini-batches,
// each batch gradient scaled by N_s/N_{m,s}. MAP adds weight*(r-mu0)/sigma0^2;
// KL-output adds its gradient through the output logits; Noisy adds a fresh
// p0 draw to r before each batch forward (never accumulated into r).
AdaptResult adapt_min_ce(const Network& net, const LabeledFrames& data, const AdaptMethod& method,
                         const AdaptHyper& hyper, const Regularizer& reg, RandomStream& stream);

struct KlPenalty {
  double value = 0.0;  // mean per-frame KL(SI || adapted)
  Matrix dlogits;      // gradient w.r.t. adapted logits
};
KlPenalty kl_output_penalty(const Matrix& si_probs, const Matrix& adapted_probs);

// Per-speaker structured-text record; see docs/FORMATS.md.
void save_sd_params(const SdParams& params, const AdaptMethod& method,
                    const std::string& speaker_id, const std::string& path);
struct SdParamsFile {
  std::string speaker_id;
  AdaptMethod method;
  SdParams params;
};
SdParamsFile load_sd_params(const std::string& path);

}  // namespace bda
