// bda/network.cc

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

#include "bda/network.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace bda {

void NetworkConfig::validate() const {
  if (input_dim < 1 || num_classes < 1 || hidden_dims.empty())
    throw ConfigError("NetworkConfig: needs input_dim >= 1, num_classes >= 1, >= 1 hidden layer");
  for (int d : hidden_dims)
    if (d < 1) throw ConfigError("NetworkConfig: hidden dims must be >= 1");
}

int Network::layer_dim(int layer) const {
  if (layer == 0) return cfg.input_dim;
  if (layer >= 1 && layer <= num_hidden()) return cfg.hidden_dims[layer - 1];
  throw ConfigError("layer_dim: layer index out of range");
}

void Network::validate() const {
  cfg.validate();
  const int h = num_hidden();
  if (static_cast<int>(layers.size()) != h + 1) throw ConfigError("Network: layer count mismatch");
  int in = cfg.input_dim;
  for (int k = 0; k < h; ++k) {
    if (layers[k].rows != cfg.hidden_dims[k] || layers[k].cols != in)
      throw ConfigError("Network: hidden layer shape mismatch");
    in = cfg.hidden_dims[k];
  }
  if (layers[h].rows != cfg.num_classes || layers[h].cols != in)
    throw ConfigError("Network: output layer shape mismatch");
  for (const Layer& l : layers) {
    for (double v : l.w)
      if (!std::isfinite(v)) throw NumericError("Network: non-finite weight");
    for (double v : l.b)
      if (!std::isfinite(v)) throw NumericError("Network: non-finite bias");
  }
}

Labels Labels::slice(int r0, int r1) const {
  Labels out;
  if (is_soft()) {
    out.soft = slice_rows(soft, r0, r1);
  } else {
    out.hard.assign(hard.begin() + r0, hard.begin() + r1);
  }
  return out;
}

void LabeledFrames::validate() const {
  if (labels.count() != frames.rows)
    throw ConfigError("LabeledFrames: label count != frame count");
  if (utt_offsets.size() < 2 || utt_offsets.front() != 0 ||
      utt_offsets.back() != frames.rows)
    throw ConfigError("LabeledFrames: utterance boundaries must partition the frames");
  for (size_t i = 1; i < utt_offsets.size(); ++i)
    if (utt_offsets[i] < utt_offsets[i - 1])
      throw ConfigError("LabeledFrames: utterance boundaries must be non-decreasing");
}

namespace {

// y = x * W^T + b, per row.
Matrix affine(const Matrix& x, const Layer& l) {
  Matrix y(x.rows, l.rows);
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int i = 0; i < l.rows; ++i) {
      const double* wr = l.w.data() + static_cast<size_t>(i) * l.cols;
      double acc = l.b[i];
      for (int j = 0; j < l.cols; ++j) acc += wr[j] * xr[j];
      yr[i] = acc;
    }
  }
  return y;
}

void softmax_rows(Matrix& m) {
  for (int t = 0; t < m.rows; ++t) {
    double* r = m.row(t);
    double mx = r[0];
    for (int c = 1; c < m.cols; ++c) mx = std::max(mx, r[c]);
    double sum = 0.0;
    for (int c = 0; c < m.cols; ++c) {
      r[c] = std::exp(r[c] - mx);
      sum += r[c];
    }
    for (int c = 0; c < m.cols; ++c) r[c] /= sum;
  }
}

inline double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

}  // namespace

ForwardTrace forward(const Network& net, const Matrix& frames, const Adaptor* adaptor) {
  if (frames.cols != net.cfg.input_dim)
    throw ConfigError("forward: frame dim != input_dim");
  const int hcount = net.num_hidden();
  ForwardTrace tr;
  tr.num_frames = frames.rows;
  tr.input = frames;
  tr.z.resize(hcount);
  tr.h.resize(hcount);
  tr.h_s.resize(hcount);

  const Matrix* cur = &tr.input;
  if (adaptor && adaptor->adapts(0)) {
    tr.input_adapted = Matrix(frames.rows, frames.cols);
    const std::vector<double>& r = adaptor->values(0);
    std::vector<double> row(frames.cols);
    for (int t = 0; t < frames.rows; ++t) {
      row.assign(frames.row(t), frames.row(t) + frames.cols);
      const std::vector<double> a = apply_sd(*adaptor->method, row, r);
      std::copy(a.begin(), a.end(), tr.input_adapted.row(t));
    }
    cur = &tr.input_adapted;
  }

  for (int k = 0; k < hcount; ++k) {
    const int layer = k + 1;
    tr.z[k] = affine(*cur, net.layers[k]);
    const Matrix* za = &tr.z[k];
    const bool adapted = adaptor && adaptor->adapts(layer);
    const AdaptVariant variant = adapted ? adaptor->method->variant : AdaptVariant::kLhuc;

    if (adapted && variant == AdaptVariant::kLhn) {
      Matrix zm(za->rows, za->cols);
      const std::vector<double>& r = adaptor->values(layer);
      std::vector<double> row(za->cols);
      for (int t = 0; t < za->rows; ++t) {
        row.assign(za->row(t), za->row(t) + za->cols);
        const std::vector<double> a = apply_sd(*adaptor->method, row, r);
        std::copy(a.begin(), a.end(), zm.row(t));
      }
      tr.z_adapt[layer] = std::move(zm);
      za = &tr.z_adapt[layer];
    }

    if (adapted && variant == AdaptVariant::kPact) {
      Matrix hm(za->rows, za->cols);
      const std::vector<double>& r = adaptor->values(layer);
      const int d = za->cols;
      for (int t = 0; t < za->rows; ++t) {
        const double* zr = za->row(t);
        double* hr = hm.row(t);
        for (int i = 0; i < d; ++i) hr[i] = zr[i] > 0.0 ? r[i] * zr[i] : r[d + i] * zr[i];
      }
      tr.h[k] = std::move(hm);
    } else {
      Matrix hm(za->rows, za->cols);
      for (int t = 0; t < za->rows; ++t) {
        const double* zr = za->row(t);
        double* hr = hm.row(t);
        for (int i = 0; i < za->cols; ++i) hr[i] = zr[i] > 0.0 ? zr[i] : 0.0;
      }
      tr.h[k] = std::move(hm);
    }

    if (adapted && (variant == AdaptVariant::kLhuc || variant == AdaptVariant::kHub)) {
      Matrix hs(tr.h[k].rows, tr.h[k].cols);
      const std::vector<double>& r = adaptor->values(layer);
      std::vector<double> row(tr.h[k].cols);
      for (int t = 0; t < tr.h[k].rows; ++t) {
        row.assign(tr.h[k].row(t), tr.h[k].row(t) + tr.h[k].cols);
        const std::vector<double> a = apply_sd(*adaptor->method, row, r);
        std::copy(a.begin(), a.end(), hs.row(t));
      }
      tr.h_s[k] = std::move(hs);
    } else {
      tr.h_s[k] = tr.h[k];
    }
    cur = &tr.h_s[k];
  }

  tr.logits = affine(*cur, net.layers[hcount]);
  tr.probs = tr.logits;
  softmax_rows(tr.probs);
  return tr;
}

double ce_sum(const Matrix& probs, const Labels& labels) {
  if (labels.count() != probs.rows) throw ConfigError("ce_sum: label/frame count mismatch");
  double ce = 0.0;
  if (labels.is_soft()) {
    if (labels.soft.cols != probs.cols) throw ConfigError("ce_sum: class count mismatch");
    for (int t = 0; t < probs.rows; ++t) {
      const double* q = labels.soft.row(t);
      const double* p = probs.row(t);
      for (int c = 0; c < probs.cols; ++c)
        if (q[c] != 0.0) ce -= q[c] * safe_log(p[c]);
    }
  } else {
    for (int t = 0; t < probs.rows; ++t) {
      const int c = labels.hard[t];
      if (c < 0 || c >= probs.cols) throw ConfigError("ce_sum: label out of range");
      ce -= safe_log(probs.at(t, c));
    }
  }
  return ce;
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Labels& labels,
                   const Adaptor* adaptor, const Matrix* extra_dlogits) {
  const int hcount = net.num_hidden();
  if (static_cast<int>(trace.h_s.size()) != hcount || trace.probs.cols != net.cfg.num_classes)
    throw ConfigError("backward: trace/net mismatch");
  if (labels.count() != trace.num_frames)
    throw ConfigError("backward: label/frame count mismatch");
  const int T = trace.num_frames;

  Gradients g;
  g.layer_grads.reserve(net.layers.size());
  for (const Layer& l : net.layers) g.layer_grads.emplace_back(l.rows, l.cols);
  g.act_grad.resize(hcount);

  // dCE/dlogits = probs - target
  g.dlogits = trace.probs;
  if (labels.is_soft()) {
    for (int t = 0; t < T; ++t) {
      double* dr = g.dlogits.row(t);
      const double* q = labels.soft.row(t);
      for (int c = 0; c < g.dlogits.cols; ++c) dr[c] -= q[c];
    }
  } else {
    for (int t = 0; t < T; ++t) g.dlogits.at(t, labels.hard[t]) -= 1.0;
  }
  if (extra_dlogits) {
    if (extra_dlogits->rows != T || extra_dlogits->cols != g.dlogits.cols)
      throw ConfigError("backward: extra_dlogits shape mismatch");
    for (size_t i = 0; i < g.dlogits.data.size(); ++i) g.dlogits.data[i] += extra_dlogits->data[i];
  }

  // Output layer.
  {
    const Layer& out = net.layers[hcount];
    Layer& go = g.layer_grads[hcount];
    const Matrix& prev = trace.h_s[hcount - 1];
    for (int t = 0; t < T; ++t) {
      const double* dl = g.dlogits.row(t);
      const double* pr = prev.row(t);
      for (int i = 0; i < out.rows; ++i) {
        double* gw = go.w.data() + static_cast<size_t>(i) * out.cols;
        const double d = dl[i];
        go.b[i] += d;
        for (int j = 0; j < out.cols; ++j) gw[j] += d * pr[j];
      }
    }
  }

  // dCE/dh_s at the top hidden layer.
  Matrix dcur(T, net.cfg.hidden_dims[hcount - 1]);
  {
    const Layer& out = net.layers[hcount];
    for (int t = 0; t < T; ++t) {
      const double* dl = g.dlogits.row(t);
      double* dc = dcur.row(t);
      for (int i = 0; i < out.rows; ++i) {
        const double dv = dl[i];
        if (dv == 0.0) continue;
        const double* wr = out.w.data() + static_cast<size_t>(i) * out.cols;
        for (int j = 0; j < out.cols; ++j) dc[j] += dv * wr[j];
      }
    }
  }

  for (int k = hcount - 1; k >= 0; --k) {
    const int layer = k + 1;
    const int d = net.cfg.hidden_dims[k];
    const bool adapted = adaptor && adaptor->adapts(layer);
    const AdaptVariant variant = adapted ? adaptor->method->variant : AdaptVariant::kLhuc;
    g.act_grad[k] = dcur;

    // Through the LHUC scaling (HUB shifts pass gradients unchanged).
    Matrix dh = std::move(dcur);
    if (adapted && variant == AdaptVariant::kLhuc) {
      const std::vector<double>& r = adaptor->values(layer);
      for (int t = 0; t < T; ++t) {
        double* dr = dh.row(t);
        for (int i = 0; i < d; ++i) dr[i] *= xi_apply(adaptor->method->activation, r[i]);
      }
    }

    // Through the activation.
    const Matrix& za = (adapted && variant == AdaptVariant::kLhn) ? trace.z_adapt.at(layer)
                                                                  : trace.z[k];
    Matrix dza(T, d);
    if (adapted && variant == AdaptVariant::kPact) {
      const std::vector<double>& r = adaptor->values(layer);
      for (int t = 0; t < T; ++t) {
        const double* zr = za.row(t);
        const double* dhr = dh.row(t);
        double* dzr = dza.row(t);
        for (int i = 0; i < d; ++i) dzr[i] = dhr[i] * (zr[i] > 0.0 ? r[i] : r[d + i]);
      }
    } else {
      for (int t = 0; t < T; ++t) {
        const double* zr = za.row(t);
        const double* dhr = dh.row(t);
        double* dzr = dza.row(t);
        for (int i = 0; i < d; ++i) dzr[i] = zr[i] > 0.0 ? dhr[i] : 0.0;
      }
    }

    // Through the LHN matrix: dz = M^T dz'.
    Matrix dz;
    if (adapted && variant == AdaptVariant::kLhn) {
      g.preact_adapt_grad[layer] = dza;
      const std::vector<double>& m = adaptor->values(layer);
      dz = Matrix(T, d);
      for (int t = 0; t < T; ++t) {
        const double* dzar = dza.row(t);
        double* dzr = dz.row(t);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int i = 0; i < d; ++i) acc += dzar[i] * m[static_cast<size_t>(i) * d + j];
          dzr[j] = acc;
        }
      }
    } else {
      dz = std::move(dza);
    }

    const Matrix& prev = (k == 0)
                             ? (trace.input_adapted.empty() ? trace.input : trace.input_adapted)
                             : trace.h_s[k - 1];
    const Layer& l = net.layers[k];
    Layer& gl = g.layer_grads[k];
    for (int t = 0; t < T; ++t) {
      const double* dzr = dz.row(t);
      const double* pr = prev.row(t);
      for (int i = 0; i < l.rows; ++i) {
        const double dv = dzr[i];
        if (dv == 0.0) continue;
        gl.b[i] += dv;
        double* gw = gl.w.data() + static_cast<size_t>(i) * l.cols;
        for (int j = 0; j < l.cols; ++j) gw[j] += dv * pr[j];
      }
    }

    const bool need_input_grad = (k == 0) && adaptor && adaptor->adapts(0);
    if (k > 0 || need_input_grad) {
      Matrix dprev(T, l.cols);
      for (int t = 0; t < T; ++t) {
        const double* dzr = dz.row(t);
        double* dp = dprev.row(t);
        for (int i = 0; i < l.rows; ++i) {
          const double dv = dzr[i];
          if (dv == 0.0) continue;
          const double* wr = l.w.data() + static_cast<size_t>(i) * l.cols;
          for (int j = 0; j < l.cols; ++j) dp[j] += dv * wr[j];
        }
      }
      if (k > 0) {
        dcur = std::move(dprev);
      } else {
        g.input_grad = std::move(dprev);
      }
    }
  }
  return g;
}

Network init_network(const NetworkConfig& cfg, RandomStream& stream, double init_scale) {
  cfg.validate();
  Network net;
  net.cfg = cfg;
  int in = cfg.input_dim;
  for (size_t k = 0; k < cfg.hidden_dims.size(); ++k) {
    Layer l(cfg.hidden_dims[k], in);
    const double std = init_scale * std::sqrt(2.0 / in);  // He init for ReLU
    for (double& w : l.w) w = std * stream.gaussian();
    net.layers.push_back(std::move(l));
    in = cfg.hidden_dims[k];
  }
  Layer out(cfg.num_classes, in);
  const double std = init_scale * std::sqrt(1.0 / in);
  for (double& w : out.w) w = std * stream.gaussian();
  net.layers.push_back(std::move(out));
  return net;
}

SiTrainResult train_core(const std::vector<LabeledFrames>& speakers, const TrainConfig& cfg,
                         RandomStream& stream, const TrainHooks* hooks) {
  if (speakers.empty()) throw ConfigError("train: empty corpus");
  for (const LabeledFrames& s : speakers) s.validate();

  SiTrainResult res;
  res.net = init_network(cfg.net, stream, cfg.init_scale);

  struct BatchRef { int speaker; int begin; int end; };
  std::vector<BatchRef> batches;
  long total_frames = 0;
  for (size_t s = 0; s < speakers.size(); ++s) {
    const int n = speakers[s].frames.rows;
    total_frames += n;
    for (int b = 0; b < n; b += cfg.batch_frames)
      batches.push_back({static_cast<int>(s), b, std::min(b + cfg.batch_frames, n)});
  }
  if (total_frames == 0) throw ConfigError("train: no frames");

  std::vector<int> order(batches.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<Layer> velocity;
  if (cfg.momentum != 0.0)
    for (const Layer& l : res.net.layers) velocity.emplace_back(l.rows, l.cols);

  int patience_left = cfg.plateau_patience;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    stream.shuffle_indices(order);
    double epoch_ce = 0.0;
    for (int bi : order) {
      const BatchRef& br = batches[bi];
      const LabeledFrames& sp = speakers[br.speaker];
      const Matrix bf = slice_rows(sp.frames, br.begin, br.end);
      const Labels bl = sp.labels.slice(br.begin, br.end);

      Adaptor ad{};
      const Adaptor* adp = nullptr;
      if (hooks && hooks->adaptor) {
        ad = hooks->adaptor(br.speaker);
        if (ad.method) adp = &ad;
      }
      const ForwardTrace tr = forward(res.net, bf, adp);
      const double ce = ce_sum(tr.probs, bl);
      if (!std::isfinite(ce))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " speaker " + sp.speaker_id);
      epoch_ce += ce;

      const Gradients g = backward(res.net, tr, bl, adp);
      const double lr = cfg.learning_rate / (br.end - br.begin);
      for (size_t l = 0; l < res.net.layers.size(); ++l) {
        Layer& lay = res.net.layers[l];
        const Layer& gl = g.layer_grads[l];
        if (cfg.momentum != 0.0) {
          Layer& v = velocity[l];
          for (size_t i = 0; i < lay.w.size(); ++i) {
            v.w[i] = cfg.momentum * v.w[i] + lr * gl.w[i];
            lay.w[i] -= v.w[i];
          }
          for (size_t i = 0; i < lay.b.size(); ++i) {
            v.b[i] = cfg.momentum * v.b[i] + lr * gl.b[i];
            lay.b[i] -= v.b[i];
          }
        } else {
          for (size_t i = 0; i < lay.w.size(); ++i) lay.w[i] -= lr * gl.w[i];
          for (size_t i = 0; i < lay.b.size(); ++i) lay.b[i] -= lr * gl.b[i];
        }
      }
      if (hooks && hooks->sd_update) hooks->sd_update(br.speaker, tr, g);
    }
    const double mean_ce = epoch_ce / total_frames;
    if (!res.epoch_ce.empty()) {
      const double prev = res.epoch_ce.back();
      if (prev - mean_ce < cfg.plateau_rel_tol * std::max(prev, 1e-12)) {
        if (--patience_left <= 0) {
          res.epoch_ce.push_back(mean_ce);
          break;
        }
      } else {
        patience_left = cfg.plateau_patience;
      }
    }
    res.epoch_ce.push_back(mean_ce);
  }
  return res;
}

SiTrainResult train_si(const std::vector<LabeledFrames>& speakers, const TrainConfig& cfg,
                       RandomStream& stream) {
  return train_core(speakers, cfg, stream, nullptr);
}

int argmax_row(const double* row, int n) {
  int best = 0;
  for (int c = 1; c < n; ++c)
    if (row[c] > row[best]) best = c;  // ties keep the lower index
  return best;
}

Labels pseudo_label(const Network& net, const Matrix& frames, LabelMode mode,
                    const Adaptor* adaptor) {
  Labels out;
  constexpr int kChunk = 4096;
  if (mode == LabelMode::kSoft) out.soft = Matrix(frames.rows, net.cfg.num_classes);
  for (int b = 0; b < frames.rows; b += kChunk) {
    const int e = std::min(b + kChunk, frames.rows);
    const Matrix chunk = slice_rows(frames, b, e);
    const ForwardTrace tr = forward(net, chunk, adaptor);
    if (mode == LabelMode::kHard) {
      for (int t = 0; t < tr.probs.rows; ++t)
        out.hard.push_back(argmax_row(tr.probs.row(t), tr.probs.cols));
    } else {
      for (int t = 0; t < tr.probs.rows; ++t)
        std::copy(tr.probs.row(t), tr.probs.row(t) + tr.probs.cols, out.soft.row(b + t));
    }
  }
  return out;
}

ErrorStats frame_errors(const Matrix& probs, const std::vector<int>& ref,
                        const std::vector<int>& utt_offsets) {
  if (static_cast<int>(ref.size()) != probs.rows)
    throw ConfigError("frame_errors: label count mismatch");
  ErrorStats st;
  st.frames = probs.rows;
  const int utts = utt_offsets.empty() ? 0 : static_cast<int>(utt_offsets.size()) - 1;
  st.utt_errors.assign(std::max(utts, 0), 0);
  int u = 0;
  for (int t = 0; t < probs.rows; ++t) {
    while (u + 1 < utts && t >= utt_offsets[u + 1]) ++u;
    if (argmax_row(probs.row(t), probs.cols) != ref[t]) {
      ++st.errors;
      if (utts > 0) ++st.utt_errors[u];
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

using nlohmann::json;

void save_network(const Network& net, const std::string& path) {
  json j;
  j["format"] = "bda-network";
  j["version"] = 1;
  j["config"] = {{"input_dim", net.cfg.input_dim},
                 {"hidden_dims", net.cfg.hidden_dims},
                 {"num_classes", net.cfg.num_classes},
                 {"activation", "relu"}};
  json layers = json::array();
  for (const Layer& l : net.layers)
    layers.push_back({{"rows", l.rows}, {"cols", l.cols}, {"weight", l.w}, {"bias", l.b}});
  j["layers"] = std::move(layers);
  std::ofstream f(path);
  if (!f) throw IoError("save_network: cannot open " + path);
  f << j.dump(1) << "\n";
  if (!f) throw IoError("save_network: write failed for " + path);
}

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_network: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("load_network: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bda-network")
    throw IoError("load_network: not a network checkpoint: " + path);
  Network net;
  net.cfg.input_dim = j["config"]["input_dim"].get<int>();
  net.cfg.hidden_dims = j["config"]["hidden_dims"].get<std::vector<int>>();
  net.cfg.num_classes = j["config"]["num_classes"].get<int>();
  for (const json& lj : j["layers"]) {
    Layer l(lj["rows"].get<int>(), lj["cols"].get<int>());
    l.w = lj["weight"].get<std::vector<double>>();
    l.b = lj["bias"].get<std::vector<double>>();
    if (l.w.size() != static_cast<size_t>(l.rows) * l.cols || l.b.size() != static_cast<size_t>(l.rows))
      throw IoError("load_network: parameter block size mismatch in " + path);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace bda
