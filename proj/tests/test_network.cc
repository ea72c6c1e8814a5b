// tests/test_network.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "bda/network.h"
#include "doctest.h"

using namespace bda;

namespace {

Matrix random_frames(RandomStream& s, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * s.gaussian();
  return m;
}

// Nonzero biases keep pre-activations away from the ReLU kink, where central
// differences are not the derivative.
void randomize_biases(Network& net, RandomStream& s) {
  for (Layer& l : net.layers)
    for (double& b : l.b) b = 0.1 * s.gaussian();
}

Labels random_hard_labels(RandomStream& s, int rows, int classes) {
  Labels l;
  for (int i = 0; i < rows; ++i) l.hard.push_back(static_cast<int>(s.next_u64() % classes));
  return l;
}

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0.0;
  for (size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::abs(want[i]), 1e-6);
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("softmax rows sum to 1 within 1e-9") {
  RandomStream s(3);
  NetworkConfig cfg{8, {16, 12}, 5};
  Network net = init_network(cfg, s);
  const Matrix frames = random_frames(s, 40, 8, 3.0);
  const ForwardTrace tr = forward(net, frames);
  for (int t = 0; t < tr.probs.rows; ++t) {
    double sum = 0.0;
    for (int c = 0; c < tr.probs.cols; ++c) sum += tr.probs.at(t, c);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("forward is deterministic and rejects bad shapes") {
  RandomStream s(4);
  NetworkConfig cfg{6, {10}, 4};
  Network net = init_network(cfg, s);
  const Matrix frames = random_frames(s, 9, 6);
  const ForwardTrace a = forward(net, frames);
  const ForwardTrace b = forward(net, frames);
  CHECK(a.probs == b.probs);
  CHECK(a.z[0] == b.z[0]);

  const Matrix bad = random_frames(s, 3, 5);
  CHECK_THROWS_AS(forward(net, bad), ConfigError);
}

TEST_CASE("weight and bias gradients match central differences") {
  // >= 10 random small configurations, rel err < 1e-4 at h = 1e-4.
  for (int trial = 0; trial < 10; ++trial) {
    RandomStream s(100 + trial);
    const int in = 2 + static_cast<int>(s.next_u64() % 4);
    const int h1 = 3 + static_cast<int>(s.next_u64() % 5);
    const int classes = 2 + static_cast<int>(s.next_u64() % 4);
    NetworkConfig cfg{in, {h1, 4}, classes};
    Network net = init_network(cfg, s);
    randomize_biases(net, s);
    const Matrix frames = random_frames(s, 8, in);
    Labels labels;
    if (trial % 3 == 0) {
      labels.soft = Matrix(8, classes);  // soft supervision path
      for (int t = 0; t < 8; ++t) {
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
          labels.soft.at(t, c) = s.uniform01() + 0.1;
          sum += labels.soft.at(t, c);
        }
        for (int c = 0; c < classes; ++c) labels.soft.at(t, c) /= sum;
      }
    } else {
      labels = random_hard_labels(s, 8, classes);
    }

    const ForwardTrace tr = forward(net, frames);
    const Gradients g = backward(net, tr, labels);

    for (size_t li = 0; li < net.layers.size(); ++li) {
      auto f = [&](const std::vector<double>& w) {
        Network n2 = net;
        n2.layers[li].w = w;
        return ce_sum(forward(n2, frames).probs, labels);
      };
      const std::vector<double> fd = fd_gradient(f, net.layers[li].w, 1e-4);
      CHECK(max_rel_err(g.layer_grads[li].w, fd) < 1e-4);

      auto fb = [&](const std::vector<double>& b) {
        Network n2 = net;
        n2.layers[li].b = b;
        return ce_sum(forward(n2, frames).probs, labels);
      };
      const std::vector<double> fdb = fd_gradient(fb, net.layers[li].b, 1e-4);
      CHECK(max_rel_err(g.layer_grads[li].b, fdb) < 1e-4);
    }
  }
}

TEST_CASE("saturated predictions give near-zero gradients") {
  RandomStream s(7);
  NetworkConfig cfg{4, {6}, 3};
  Network net = init_network(cfg, s);
  randomize_biases(net, s);
  // Blow up the output layer so the argmax class saturates to ~1.
  const Matrix frames = random_frames(s, 5, 4);
  Layer& out = net.layers.back();
  for (double& w : out.w) w *= 1e4;
  for (double& b : out.b) b *= 1e4;
  const ForwardTrace tr = forward(net, frames);
  Labels labels;
  for (int t = 0; t < 5; ++t) {
    REQUIRE(tr.probs.at(t, argmax_row(tr.probs.row(t), 3)) > 1.0 - 1e-10);
    labels.hard.push_back(argmax_row(tr.probs.row(t), 3));
  }
  const Gradients g = backward(net, tr, labels);
  for (const Layer& l : g.layer_grads)
    for (double v : l.w) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("activation-gradient buffers exist for unadapted layers") {
  RandomStream s(8);
  NetworkConfig cfg{5, {7, 6}, 4};
  Network net = init_network(cfg, s);
  const Matrix frames = random_frames(s, 6, 5);
  const Labels labels = random_hard_labels(s, 6, 4);
  const ForwardTrace tr = forward(net, frames);
  const Gradients g = backward(net, tr, labels);
  REQUIRE(g.act_grad.size() == 2);
  // Check dCE/dh at the top layer against finite differences through a
  // perturbed activation value.
  const int t = 2, i = 3;
  auto f = [&](const std::vector<double>& delta) {
    ForwardTrace tr2 = forward(net, frames);
    tr2.h_s[1].at(t, i) += delta[0];
    // recompute the head on the perturbed activation
    const Layer& out = net.layers[2];
    Matrix logits(tr2.num_frames, out.rows);
    for (int tt = 0; tt < tr2.num_frames; ++tt)
      for (int r = 0; r < out.rows; ++r) {
        double acc = out.b[r];
        for (int c = 0; c < out.cols; ++c)
          acc += out.w[static_cast<size_t>(r) * out.cols + c] * tr2.h_s[1].at(tt, c);
        logits.at(tt, r) = acc;
      }
    Matrix probs = logits;
    for (int tt = 0; tt < probs.rows; ++tt) {
      double mx = probs.at(tt, 0);
      for (int c = 1; c < probs.cols; ++c) mx = std::max(mx, probs.at(tt, c));
      double sum = 0.0;
      for (int c = 0; c < probs.cols; ++c) {
        probs.at(tt, c) = std::exp(probs.at(tt, c) - mx);
        sum += probs.at(tt, c);
      }
      for (int c = 0; c < probs.cols; ++c) probs.at(tt, c) /= sum;
    }
    return ce_sum(probs, labels);
  };
  const std::vector<double> fd = fd_gradient(f, {0.0}, 1e-5);
  CHECK(g.act_grad[1].at(t, i) == doctest::Approx(fd[0]).epsilon(1e-5));
}

TEST_CASE("pseudo labels: uniform tie breaks to the lowest class") {
  NetworkConfig cfg{3, {4}, 5};
  Network net;
  net.cfg = cfg;
  net.layers.emplace_back(4, 3);
  net.layers.emplace_back(5, 4);  // all-zero weights -> uniform output
  Matrix frames(2, 3);
  frames.at(0, 0) = 1.0;
  frames.at(1, 2) = -2.0;
  const Labels hard = pseudo_label(net, frames, LabelMode::kHard);
  CHECK(hard.hard[0] == 0);
  CHECK(hard.hard[1] == 0);
}

TEST_CASE("pseudo labels: soft mode rows are distributions") {
  RandomStream s(11);
  NetworkConfig cfg{4, {8}, 6};
  Network net = init_network(cfg, s);
  const Matrix frames = random_frames(s, 12, 4);
  const Labels soft = pseudo_label(net, frames, LabelMode::kSoft);
  REQUIRE(soft.is_soft());
  for (int t = 0; t < soft.soft.rows; ++t) {
    double sum = 0.0;
    for (int c = 0; c < soft.soft.cols; ++c) sum += soft.soft.at(t, c);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

namespace {

// Two linearly separable blobs.
std::vector<LabeledFrames> toy_corpus(RandomStream& s, int frames_per_speaker) {
  std::vector<LabeledFrames> out;
  for (int spk = 0; spk < 2; ++spk) {
    LabeledFrames lf;
    lf.speaker_id = "toy" + std::to_string(spk);
    lf.frames = Matrix(frames_per_speaker, 2);
    for (int t = 0; t < frames_per_speaker; ++t) {
      const int c = static_cast<int>(s.next_u64() % 2);
      lf.frames.at(t, 0) = (c == 0 ? -2.0 : 2.0) + 0.3 * s.gaussian();
      lf.frames.at(t, 1) = (c == 0 ? 1.0 : -1.0) + 0.3 * s.gaussian();
      lf.labels.hard.push_back(c);
    }
    lf.utt_offsets = {0, frames_per_speaker / 2, frames_per_speaker};
    out.push_back(std::move(lf));
  }
  return out;
}

// Plain batch-gradient logistic regression used as the independent oracle.
double logistic_accuracy(const std::vector<LabeledFrames>& data) {
  double w0 = 0.0, w1 = 0.0, b = 0.0;
  for (int iter = 0; iter < 2000; ++iter) {
    double g0 = 0.0, g1 = 0.0, gb = 0.0;
    for (const LabeledFrames& lf : data)
      for (int t = 0; t < lf.frames.rows; ++t) {
        const double z = w0 * lf.frames.at(t, 0) + w1 * lf.frames.at(t, 1) + b;
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double d = p - lf.labels.hard[t];
        g0 += d * lf.frames.at(t, 0);
        g1 += d * lf.frames.at(t, 1);
        gb += d;
      }
    w0 -= 0.01 * g0;
    w1 -= 0.01 * g1;
    b -= 0.01 * gb;
  }
  long ok = 0, total = 0;
  for (const LabeledFrames& lf : data)
    for (int t = 0; t < lf.frames.rows; ++t) {
      const double z = w0 * lf.frames.at(t, 0) + w1 * lf.frames.at(t, 1) + b;
      ok += ((z > 0.0) == (lf.labels.hard[t] == 1));
      ++total;
    }
  return static_cast<double>(ok) / total;
}

}  // namespace

TEST_CASE("train_si reaches the logistic-regression oracle on separable data") {
  RandomStream gen(21);
  const std::vector<LabeledFrames> data = toy_corpus(gen, 200);
  const double oracle_acc = logistic_accuracy(data);
  CHECK(oracle_acc > 0.99);

  TrainConfig cfg;
  cfg.net = {2, {8}, 2};
  cfg.epochs = 40;
  cfg.learning_rate = 0.1;
  RandomStream stream(22);
  const SiTrainResult res = train_si(data, cfg, stream);

  long ok = 0, total = 0;
  for (const LabeledFrames& lf : data) {
    const ForwardTrace tr = forward(res.net, lf.frames);
    for (int t = 0; t < tr.probs.rows; ++t) {
      ok += (argmax_row(tr.probs.row(t), 2) == lf.labels.hard[t]);
      ++total;
    }
  }
  const double acc = static_cast<double>(ok) / total;
  CHECK(acc > 0.99);
  CHECK(res.epoch_ce.front() > res.epoch_ce.back());
}

TEST_CASE("train_si with zero epochs returns the initialized net") {
  RandomStream gen(23);
  const std::vector<LabeledFrames> data = toy_corpus(gen, 64);
  TrainConfig cfg;
  cfg.net = {2, {4}, 2};
  cfg.epochs = 0;
  RandomStream a(5), b(5);
  const SiTrainResult trained = train_si(data, cfg, a);
  const Network fresh = init_network(cfg.net, b, cfg.init_scale);
  CHECK(trained.net == fresh);
  CHECK(trained.epoch_ce.empty());
}

TEST_CASE("train_si is bit-deterministic under a fixed seed") {
  RandomStream gen(25);
  const std::vector<LabeledFrames> data = toy_corpus(gen, 128);
  TrainConfig cfg;
  cfg.net = {2, {6}, 2};
  cfg.epochs = 5;
  RandomStream a(77), b(77);
  const SiTrainResult r1 = train_si(data, cfg, a);
  const SiTrainResult r2 = train_si(data, cfg, b);
  CHECK(r1.net == r2.net);
  CHECK(r1.epoch_ce == r2.epoch_ce);
}

TEST_CASE("pseudo labels agree with true labels at training accuracy") {
  RandomStream gen(26);
  const std::vector<LabeledFrames> data = toy_corpus(gen, 200);
  TrainConfig cfg;
  cfg.net = {2, {8}, 2};
  cfg.epochs = 40;
  cfg.learning_rate = 0.1;
  RandomStream stream(27);
  const SiTrainResult res = train_si(data, cfg, stream);

  long agree = 0, correct = 0, total = 0;
  for (const LabeledFrames& lf : data) {
    const Labels pl = pseudo_label(res.net, lf.frames, LabelMode::kHard);
    const ForwardTrace tr = forward(res.net, lf.frames);
    for (int t = 0; t < lf.frames.rows; ++t) {
      agree += (pl.hard[t] == lf.labels.hard[t]);
      correct += (argmax_row(tr.probs.row(t), 2) == lf.labels.hard[t]);
      ++total;
    }
  }
  CHECK(agree == correct);  // pseudo labels are exactly the decoded classes
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  RandomStream s(30);
  NetworkConfig cfg{5, {9, 7}, 4};
  Network net = init_network(cfg, s);
  const std::string path = "test_network_ckpt.json";
  save_network(net, path);
  const Network loaded = load_network(path);
  CHECK(loaded == net);
  std::remove(path.c_str());
}

TEST_CASE("frame_errors counts per utterance") {
  Matrix probs(4, 2);
  probs.at(0, 0) = 0.9; probs.at(0, 1) = 0.1;
  probs.at(1, 0) = 0.2; probs.at(1, 1) = 0.8;
  probs.at(2, 0) = 0.6; probs.at(2, 1) = 0.4;
  probs.at(3, 0) = 0.3; probs.at(3, 1) = 0.7;
  const ErrorStats st = frame_errors(probs, {0, 0, 0, 1}, {0, 2, 4});
  CHECK(st.errors == 1);
  CHECK(st.frames == 4);
  REQUIRE(st.utt_errors.size() == 2);
  CHECK(st.utt_errors[0] == 1);
  CHECK(st.utt_errors[1] == 0);
  CHECK(st.rate() == doctest::Approx(0.25));
}
