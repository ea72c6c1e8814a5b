// bda/adapt_det.cc

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

#include "bda/adapt_det.h"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace bda {

double default_adapt_lr(AdaptVariant variant) {
  return variant == AdaptVariant::kHub ? 1e-6 : 0.01;
}

static void validate_method(const AdaptMethod& method, const Network& net) {
  if (method.layers.empty()) throw ConfigError("AdaptMethod: no adapted layers");
  int prev = -1;
  for (int l : method.layers) {
    if (l <= prev) throw ConfigError("AdaptMethod: layers must be ascending and unique");
    prev = l;
    if (l < 0 || l > net.num_hidden()) throw ConfigError("AdaptMethod: layer index out of range");
    if (l == 0 &&
        (method.variant == AdaptVariant::kPact || method.variant == AdaptVariant::kLhn))
      throw ConfigError("AdaptMethod: PAct/LHN cannot adapt the input layer");
  }
  if (method.variant == AdaptVariant::kLhn && method.layers.size() != 1)
    throw ConfigError("AdaptMethod: LHN inserts exactly one matrix at one layer");
}

SdParams init_sd_params(const AdaptMethod& method, const Network& net, RandomStream* stream) {
  validate_method(method, net);
  SdParams p;
  p.variant = method.variant;
  for (int l : method.layers) {
    const int d = net.layer_dim(l);
    const int n = sd_param_count(method.variant, d);
    std::vector<double> v(n);
    if (method.variant == AdaptVariant::kLhn && method.lhn_random_init) {
      if (!stream) throw ConfigError("init_sd_params: random LHN init needs a stream");
      const double std = 1.0 / std::sqrt(static_cast<double>(d));
      for (double& x : v) x = std * stream->gaussian();
    } else {
      for (int i = 0; i < n; ++i) v[i] = neutral_value(method.variant, method.activation, d, i);
    }
    p.layer_values[l] = std::move(v);
  }
  return p;
}

SdParams sd_gradient(const AdaptMethod& method, const SdParams& at, const ForwardTrace& trace,
                     const Gradients& grads) {
  if (at.variant != method.variant) throw ConfigError("sd_gradient: method/params mismatch");
  SdParams g;
  g.variant = method.variant;
  const int T = trace.num_frames;

  for (int l : method.layers) {
    const auto it = at.layer_values.find(l);
    if (it == at.layer_values.end()) throw ConfigError("sd_gradient: missing layer parameters");
    const std::vector<double>& r = it->second;

    const Matrix* dcur = nullptr;
    const Matrix* base = nullptr;  // h (LHUC), z (PAct/LHN), or x (layer 0)
    if (l == 0) {
      if (grads.input_grad.empty()) throw ConfigError("sd_gradient: backward ran without layer-0 adaptor");
      dcur = &grads.input_grad;
      base = &trace.input;
    } else {
      const int k = l - 1;
      if (k >= static_cast<int>(grads.act_grad.size()))
        throw ConfigError("sd_gradient: method/trace mismatch");
      dcur = &grads.act_grad[k];
      base = method.variant == AdaptVariant::kLhuc ? &trace.h[k] : &trace.z[k];
    }

    const int d = dcur->cols;
    std::vector<double> gl(r.size(), 0.0);
    switch (method.variant) {
      case AdaptVariant::kLhuc:
        for (int i = 0; i < d; ++i) {
          double acc = 0.0;
          for (int t = 0; t < T; ++t) acc += dcur->at(t, i) * base->at(t, i);
          gl[i] = acc * xi_deriv(method.activation, r[i]);
        }
        break;
      case AdaptVariant::kHub:
        for (int i = 0; i < d; ++i) {
          double acc = 0.0;
          for (int t = 0; t < T; ++t) acc += dcur->at(t, i);
          gl[i] = acc * xi_deriv(method.activation, r[i]);
        }
        break;
      case AdaptVariant::kPact:
        for (int t = 0; t < T; ++t) {
          const double* zr = base->row(t);
          const double* dr = dcur->row(t);
          for (int i = 0; i < d; ++i) {
            if (zr[i] > 0.0)
              gl[i] += dr[i] * zr[i];
            else
              gl[d + i] += dr[i] * zr[i];
          }
        }
        break;
      case AdaptVariant::kLhn: {
        const Matrix& dza = grads.preact_adapt_grad.at(l);
        for (int t = 0; t < T; ++t) {
          const double* di = dza.row(t);
          const double* zj = base->row(t);
          for (int i = 0; i < d; ++i) {
            if (di[i] == 0.0) continue;
            double* row = gl.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) row[j] += di[i] * zj[j];
          }
        }
        break;
      }
    }
    g.layer_values[l] = std::move(gl);
  }
  return g;
}

KlPenalty kl_output_penalty(const Matrix& si_probs, const Matrix& adapted_probs) {
  if (si_probs.rows != adapted_probs.rows || si_probs.cols != adapted_probs.cols)
    throw ConfigError("kl_output_penalty: shape mismatch");
  const int T = si_probs.rows;
  if (T == 0) throw ConfigError("kl_output_penalty: empty input");
  for (const Matrix* m : {&si_probs, &adapted_probs}) {
    for (int t = 0; t < T; ++t) {
      double sum = 0.0;
      for (int c = 0; c < m->cols; ++c) sum += m->at(t, c);
      if (std::abs(sum - 1.0) > 1e-6)
        throw ConfigError("kl_output_penalty: rows must be normalized distributions");
    }
  }
  KlPenalty out;
  out.dlogits = Matrix(T, si_probs.cols);
  double kl = 0.0;
  for (int t = 0; t < T; ++t) {
    const double* p = si_probs.row(t);
    const double* q = adapted_probs.row(t);
    double* dl = out.dlogits.row(t);
    for (int c = 0; c < si_probs.cols; ++c) {
      if (p[c] > 0.0) kl += p[c] * (std::log(std::max(p[c], 1e-300)) - std::log(std::max(q[c], 1e-300)));
      dl[c] = (q[c] - p[c]) / T;
    }
  }
  out.value = kl / T;
  return out;
}

namespace {

struct BatchRanges {
  std::vector<std::pair<int, int>> ranges;
};

// Contiguous frame blocks in utterance order.
BatchRanges make_batches(int total, int batch_frames) {
  BatchRanges b;
  for (int i = 0; i < total; i += batch_frames)
    b.ranges.emplace_back(i, std::min(i + batch_frames, total));
  return b;
}

}  // namespace

AdaptResult adapt_min_ce(const Network& net, const LabeledFrames& data, const AdaptMethod& method,
                         const AdaptHyper& hyper, const Regularizer& reg, RandomStream& stream) {
  validate_method(method, net);
  data.validate();
  if (data.frames.rows == 0) throw ConfigError("adapt_min_ce: empty adaptation set");
  if (reg.weight < 0.0) throw ConfigError("adapt_min_ce: regularizer weight must be >= 0");

  const double lr = hyper.learning_rate < 0.0 ? default_adapt_lr(method.variant)
                                              : hyper.learning_rate;
  const double n_total = static_cast<double>(data.frames.rows);
  const BatchRanges batches = make_batches(data.frames.rows, hyper.batch_frames);

  AdaptResult res;
  Labels labels = data.labels;

  for (int round = 0; round <= hyper.redecode_count; ++round) {
    if (round > 0) {
      // Re-generate the supervision with the adapted model, then re-estimate.
      Adaptor ad{&method, &res.params};
      labels = pseudo_label(net, data.frames,
                            hyper.supervision == LabelMode::kHard ? LabelMode::kHard
                                                                  : LabelMode::kSoft,
                            &ad);
    }
    res.params = init_sd_params(method, net, &stream);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      double epoch_ce = 0.0;
      for (const auto& [b0, b1] : batches.ranges) {
        const Matrix bf = slice_rows(data.frames, b0, b1);
        const Labels bl = labels.slice(b0, b1);

        // Noisy regularizer: perturb the forward, never the stored params.
        SdParams r_eff = res.params;
        if (reg.kind == RegKind::kNoisy) {
          for (auto& [layer, values] : r_eff.layer_values) {
            GaussianSpec spec;
            spec.mu.assign(values.size(), reg.noise_mu);
            spec.sigma.assign(values.size(), reg.noise_sigma);
            const GaussianDraw draw = gaussian_draw(stream, spec);
            for (size_t i = 0; i < values.size(); ++i) values[i] += draw.value[i];
          }
        }

        Adaptor ad{&method, &r_eff};
        const ForwardTrace tr = forward(net, bf, &ad);
        const double ce = ce_sum(tr.probs, bl);
        epoch_ce += ce;

        Matrix extra;
        const Matrix* extra_ptr = nullptr;
        if (reg.kind == RegKind::kKlOutput) {
          const ForwardTrace si_tr = forward(net, bf, nullptr);
          const KlPenalty pen = kl_output_penalty(si_tr.probs, tr.probs);
          extra = Matrix(tr.probs.rows, tr.probs.cols);
          for (size_t i = 0; i < extra.data.size(); ++i)
            extra.data[i] = reg.weight * pen.dlogits.data[i] * tr.probs.rows;
          extra_ptr = &extra;
        }

        const Gradients grads = backward(net, tr, bl, &ad, extra_ptr);
        const SdParams g = sd_gradient(method, r_eff, tr, grads);
        const double scale = n_total / (b1 - b0);

        for (auto& [layer, values] : res.params.layer_values) {
          const std::vector<double>& gl = g.layer_values.at(layer);
          const PriorSpec::LayerPrior* lp = nullptr;
          if (reg.kind == RegKind::kMap) lp = &reg.prior.at(layer);
          for (size_t i = 0; i < values.size(); ++i) {
            double step = scale * gl[i];
            if (lp) {
              const double s0 = lp->sigma0[i];
              step += reg.weight * (values[i] - lp->mu0[i]) / (s0 * s0);
            }
            values[i] -= lr * step;
            if (!std::isfinite(values[i]))
              throw NumericError("adapt_min_ce: non-finite parameter, speaker " +
                                 data.speaker_id + " epoch " + std::to_string(epoch));
          }
        }
      }
      if (!std::isfinite(epoch_ce))
        throw NumericError("adapt_min_ce: non-finite loss, speaker " + data.speaker_id);
      res.epoch_ce.push_back(epoch_ce);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// SdParams file I/O

using nlohmann::json;

void save_sd_params(const SdParams& params, const AdaptMethod& method,
                    const std::string& speaker_id, const std::string& path) {
  json j;
  j["format"] = "bda-sdparams";
  j["version"] = 1;
  j["speaker_id"] = speaker_id;
  j["method"] = to_string(method.variant);
  j["activation"] = to_string(method.activation);
  json layers = json::object();
  for (const auto& [l, v] : params.layer_values) layers[std::to_string(l)] = v;
  j["layers"] = std::move(layers);
  std::ofstream f(path);
  if (!f) throw IoError("save_sd_params: cannot open " + path);
  f << j.dump(1) << "\n";
}

SdParamsFile load_sd_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_sd_params: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("load_sd_params: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bda-sdparams")
    throw IoError("load_sd_params: not an sdparams file: " + path);
  SdParamsFile out;
  out.speaker_id = j["speaker_id"].get<std::string>();
  out.method.variant = adapt_variant_from_string(j["method"].get<std::string>());
  out.method.activation = activation_from_string(j["activation"].get<std::string>());
  out.params.variant = out.method.variant;
  for (const auto& [key, value] : j["layers"].items()) {
    const int layer = std::stoi(key);
    out.method.layers.push_back(layer);
    out.params.layer_values[layer] = value.get<std::vector<double>>();
  }
  std::sort(out.method.layers.begin(), out.method.layers.end());
  return out;
}

}  // namespace bda
