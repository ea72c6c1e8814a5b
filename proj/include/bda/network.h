// bda/network.h

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

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bda/adapt_method.h"
#include "bda/matrix.h"
#include "bda/numerics.h"

namespace bda {

// Feedforward frame classifier: ReLU hidden layers, softmax output.
struct NetworkConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int num_classes = 0;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

struct Layer {
  int rows = 0;  // output dim
  int cols = 0;  // input dim
  std::vector<double> w;  // row-major rows x cols
  std::vector<double> b;  // rows

  Layer() = default;
  Layer(int r, int c) : rows(r), cols(c), w(static_cast<size_t>(r) * c, 0.0), b(r, 0.0) {}
  bool operator==(const Layer&) const = default;
};

struct Network {
  NetworkConfig cfg;
  std::vector<Layer> layers;  // hidden layers then the output layer

  int num_hidden() const { return static_cast<int>(cfg.hidden_dims.size()); }
  int layer_dim(int layer) const;  // layer 0 = input features, 1..H = hidden
  void validate() const;
  bool operator==(const Network&) const = default;
};

// Hard per-frame class ids, or per-frame distributions over classes.
struct Labels {
  std::vector<int> hard;
  Matrix soft;  // frames x classes when soft

  bool is_soft() const { return soft.rows > 0; }
  int count() const { return is_soft() ? soft.rows : static_cast<int>(hard.size()); }
  Labels slice(int r0, int r1) const;
  bool operator==(const Labels&) const = default;
};

struct LabeledFrames {
  Matrix frames;
  Labels labels;
  std::vector<int> utt_offsets;  // utterance start indices plus final frame count
  std::string speaker_id;

  int num_utterances() const {
    return utt_offsets.empty() ? 0 : static_cast<int>(utt_offsets.size()) - 1;
  }
  void validate() const;
};

struct ForwardTrace {
  int num_frames = 0;
  Matrix input;          // raw frames
  Matrix input_adapted;  // present iff layer 0 is adapted
  std::vector<Matrix> z;         // per hidden layer, pre-activation
  std::map<int, Matrix> z_adapt; // hidden layer index (1-based) -> LHN-transformed pre-activation
  std::vector<Matrix> h;         // post-activation before LHUC/HUB scaling
  std::vector<Matrix> h_s;       // adapted activation fed to the next layer
  Matrix logits;
  Matrix probs;
};

struct Gradients {
  std::vector<Layer> layer_grads;       // same shapes as Network::layers
  std::vector<Matrix> act_grad;         // per hidden layer: dCE/dh_s
  Matrix input_grad;                    // dCE/dx_s, filled iff layer 0 adapted
  std::map<int, Matrix> preact_adapt_grad;  // LHN layers: dCE/dz'
  Matrix dlogits;
};

// Forward pass over a batch of frames; with no adaptor the trace is the plain
// speaker-independent pipeline. Throws on shape mismatch.
ForwardTrace forward(const Network& net, const Matrix& frames, const Adaptor* adaptor = nullptr);

// Cross entropy summed over frames: -sum_t log p_t[c_t] (hard) or
// -sum_t sum_c q_tc log p_tc (soft).
double ce_sum(const Matrix& probs, const Labels& labels);

// Backprop of the summed cross entropy. Produces parameter gradients plus the
// per-layer activation-gradient buffers the adaptation gradients consume.
// extra_dlogits, when given, is added to (probs - target) before the backward
// sweep, so penalty terms defined on the output distribution ride along.
Gradients backward(const Network& net, const ForwardTrace& trace, const Labels& labels,
                   const Adaptor* adaptor = nullptr, const Matrix* extra_dlogits = nullptr);

struct TrainConfig {
  NetworkConfig net;
  int epochs = 20;
  int batch_frames = 64;
  double learning_rate = 0.05;  // applied to batch-mean gradients
  double momentum = 0.0;        // classical momentum on the network parameters
  double plateau_rel_tol = 1e-3;
  int plateau_patience = 3;
  double init_scale = 1.0;
};

struct SiTrainResult {
  Network net;
  std::vector<double> epoch_ce;  // mean per-frame CE per epoch
};

Network init_network(const NetworkConfig& cfg, RandomStream& stream, double init_scale = 1.0);

// Hooks used by speaker adaptive training; train_si runs with none.
struct TrainHooks {
  std::function<Adaptor(int speaker_index)> adaptor;
  std::function<void(int speaker_index, const ForwardTrace&, const Gradients&)> sd_update;
};

SiTrainResult train_core(const std::vector<LabeledFrames>& speakers, const TrainConfig& cfg,
                         RandomStream& stream, const TrainHooks* hooks);

// Mini-batch SGD on frame cross entropy over all speakers' data.
SiTrainResult train_si(const std::vector<LabeledFrames>& speakers, const TrainConfig& cfg,
                       RandomStream& stream);

enum class LabelMode { kHard, kSoft };

// Supervision from the model's own output: argmax class ids (ties broken by
// the lowest class index) or the full per-frame posterior.
Labels pseudo_label(const Network& net, const Matrix& frames, LabelMode mode,
                    const Adaptor* adaptor = nullptr);

// Fraction of frames where argmax(probs) differs from the reference labels,
// plus per-utterance error counts.
struct ErrorStats {
  long errors = 0;
  long frames = 0;
  std::vector<int> utt_errors;
  double rate() const { return frames == 0 ? 0.0 : static_cast<double>(errors) / frames; }
};
ErrorStats frame_errors(const Matrix& probs, const std::vector<int>& ref,
                        const std::vector<int>& utt_offsets);

int argmax_row(const double* row, int n);

// Checkpoint container: JSON with a config header and row-major parameter
// blocks; see docs/FORMATS.md.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace bda
