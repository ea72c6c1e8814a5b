// bda/numerics.cc

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

#include "bda/numerics.h"

#include <cmath>

namespace bda {

uint64_t RandomStream::mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

uint64_t RandomStream::fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

RandomStream RandomStream::for_speaker(uint64_t global_seed, std::string_view speaker_id) {
  return RandomStream(mix64(global_seed ^ mix64(fnv1a64(speaker_id))));
}

uint64_t RandomStream::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  ++position_;
  uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double RandomStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

void RandomStream::shuffle_indices(std::vector<int>& idx) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

GaussianDraw gaussian_draw(RandomStream& stream, const GaussianSpec& spec) {
  const size_t d = spec.dim();
  if (d == 0) throw ConfigError("gaussian_draw: empty spec");
  if (spec.sigma.size() != 1 && spec.sigma.size() != d)
    throw ConfigError("gaussian_draw: sigma size must be 1 (tied) or dim");
  for (double s : spec.sigma)
    if (s < 0.0 || !std::isfinite(s)) throw ConfigError("gaussian_draw: invalid sigma");

  GaussianDraw out;
  out.value.resize(d);
  out.epsilon.resize(d);
  for (size_t i = 0; i < d; ++i) {
    const double s = spec.sigma_at(i);
    if (s <= kSigmaFloor) {
      out.value[i] = spec.mu[i];  // degenerate: sample equals mean
      out.epsilon[i] = 0.0;
    } else {
      const double eps = stream.gaussian();
      out.epsilon[i] = eps;
      out.value[i] = spec.mu[i] + s * eps;
    }
  }
  return out;
}

double kl_diag_gaussian(const GaussianSpec& q, const GaussianSpec& p0, bool* clamped) {
  const size_t d = q.dim();
  if (d != p0.dim()) throw ConfigError("kl_diag_gaussian: dimension mismatch");
  if ((q.sigma.size() != 1 && q.sigma.size() != d) ||
      (p0.sigma.size() != 1 && p0.sigma.size() != d))
    throw ConfigError("kl_diag_gaussian: bad sigma size");

  bool any_clamped = false;
  double kl = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double sq = q.sigma_at(i);
    double sp = p0.sigma_at(i);
    if (sq <= kSigmaFloor) {
      sq = kSigmaFloor;
      any_clamped = true;
    }
    if (sp <= kSigmaFloor) {
      sp = kSigmaFloor;
      any_clamped = true;
    }
    const double dm = q.mu[i] - p0.mu[i];
    const double vq = sq * sq;
    const double vp = sp * sp;
    kl += 0.5 * ((dm * dm + vq) / vp - std::log(vq / vp) - 1.0);
  }
  if (clamped) *clamped = any_clamped;
  return kl;
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double h) {
  if (h <= 0.0) throw ConfigError("fd_gradient: h must be positive");
  std::vector<double> g(x.size());
  std::vector<double> xp = x;
  for (size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("fd_gradient: non-finite objective evaluation");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace bda
