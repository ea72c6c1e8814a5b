// bda/numerics.h

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

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "bda/common.h"

namespace bda {

// Positivity floor for standard deviations. The KL divergence and the direct
// sigma update both contain 1/sigma terms; inputs at or below the floor are
// clamped there and flagged. Sampling treats sigma <= floor as exactly
// degenerate (the sample equals the mean and epsilon is reported as zero), so
// a posterior pinned to the floor reproduces a point estimate bit-exactly.
inline constexpr double kSigmaFloor = 1e-6;

// Deterministic 64-bit stream: splitmix64 state advance, Marsaglia polar
// gaussians with a cached spare. Fully specified here so draw sequences do
// not depend on any standard-library distribution implementation. One stream
// is never shared across concurrent tasks; distinct streams may run in
// parallel.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : seed_(seed), state_(seed) {}

  // Per-speaker stream derivation: mix64(global_seed ^ mix64(fnv1a64(id))),
  // where mix64 is the splitmix64 finalizer. Makes parallel sweeps
  // order-independent.
  static RandomStream for_speaker(uint64_t global_seed, std::string_view speaker_id);

  static uint64_t mix64(uint64_t x);
  static uint64_t fnv1a64(std::string_view s);

  uint64_t next_u64();
  double uniform01();  // in [0, 1)
  double gaussian();   // standard normal

  // Fisher-Yates over indices [0, n).
  void shuffle_indices(std::vector<int>& idx);

  uint64_t seed() const { return seed_; }
  uint64_t position() const { return position_; }

 private:
  uint64_t seed_ = 0;
  uint64_t state_ = 0;
  uint64_t position_ = 0;  // raw 64-bit draws so far
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Diagonal Gaussian with an optional tied standard deviation: sigma holds one
// entry per dimension, or exactly one scalar shared by every dimension.
struct GaussianSpec {
  std::vector<double> mu;
  std::vector<double> sigma;

  bool tied() const { return sigma.size() == 1 && mu.size() != 1; }
  size_t dim() const { return mu.size(); }
  double sigma_at(size_t d) const { return sigma.size() == 1 ? sigma[0] : sigma[d]; }
};

struct GaussianDraw {
  std::vector<double> value;    // r = mu + sigma (*) eps
  std::vector<double> epsilon;  // the standard-normal draws used
};

// Reparameterized draw r = mu + sigma (*) eps, eps ~ N(0, I). Dimensions with
// sigma <= kSigmaFloor are degenerate: value = mu exactly, eps = 0, and the
// stream is not consumed for them. Negative sigma is an invalid spec.
GaussianDraw gaussian_draw(RandomStream& stream, const GaussianSpec& spec);

// Closed-form KL(q || p0) between diagonal Gaussians, summed over dimensions:
//   1/2 sum_d [ ((mu_q - mu_p)^2 + sigma_q^2) / sigma_p^2
//               - log(sigma_q^2 / sigma_p^2) - 1 ].
// Tied sigmas are expanded across dimensions before the sum. Sigmas at or
// below the floor are clamped there and reported through *clamped.
double kl_diag_gaussian(const GaussianSpec& q, const GaussianSpec& p0,
                        bool* clamped = nullptr);

// Central-difference gradient oracle: (f(x + h e_d) - f(x - h e_d)) / 2h.
// Throws NumericError if f evaluates non-finite.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double h);

}  // namespace bda
