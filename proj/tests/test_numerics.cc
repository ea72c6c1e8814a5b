// tests/test_numerics.cc

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

#include "bda/numerics.h"
#include "doctest.h"

using namespace bda;

TEST_CASE("same seed reproduces the draw sequence") {
  RandomStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  RandomStream c(42), d(42);
  for (int i = 0; i < 1000; ++i) CHECK(c.gaussian() == d.gaussian());
}

TEST_CASE("speaker streams are independent of sibling count") {
  RandomStream a = RandomStream::for_speaker(7, "spk01");
  RandomStream b = RandomStream::for_speaker(7, "spk02");
  CHECK(a.seed() != b.seed());
  // Re-deriving gives the identical stream.
  RandomStream a2 = RandomStream::for_speaker(7, "spk01");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == a2.next_u64());
}

TEST_CASE("gaussian_draw degenerate sigma returns the mean exactly") {
  RandomStream s(1);
  GaussianSpec spec{{2.0, 3.0}, {0.0, 0.0}};
  const GaussianDraw d = gaussian_draw(s, spec);
  CHECK(d.value[0] == 2.0);
  CHECK(d.value[1] == 3.0);
  CHECK(d.epsilon[0] == 0.0);
  CHECK(s.position() == 0);  // no stream consumption
}

TEST_CASE("gaussian_draw is mu + sigma * eps") {
  RandomStream s(9);
  GaussianSpec spec{{0.0}, {1.0}};
  const GaussianDraw d = gaussian_draw(s, spec);
  CHECK(d.value[0] == d.epsilon[0]);

  RandomStream s2(9);
  GaussianSpec shifted{{1.5}, {2.0}};
  const GaussianDraw d2 = gaussian_draw(s2, shifted);
  CHECK(d2.value[0] == doctest::Approx(1.5 + 2.0 * d.epsilon[0]).epsilon(1e-15));
}

TEST_CASE("gaussian_draw rejects negative sigma") {
  RandomStream s(1);
  GaussianSpec spec{{0.0}, {-1.0}};
  CHECK_THROWS_AS(gaussian_draw(s, spec), ConfigError);
}

TEST_CASE("sample mean and variance match the spec within 1%") {
  RandomStream s(2024);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.gaussian();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("kl of identical gaussians is zero") {
  GaussianSpec q{{0.3, -1.2}, {0.7, 2.0}};
  CHECK(kl_diag_gaussian(q, q) == 0.0);
}

TEST_CASE("kl closed form matches known values") {
  GaussianSpec q{{1.0}, {1.0}};
  GaussianSpec p{{0.0}, {1.0}};
  CHECK(kl_diag_gaussian(q, p) == doctest::Approx(0.5).epsilon(1e-12));

  GaussianSpec q2{{0.0}, {0.1}};
  GaussianSpec p2{{0.0}, {1.0}};
  const double expect = 0.5 * (0.01 - std::log(0.01) - 1.0);
  CHECK(kl_diag_gaussian(q2, p2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kl dimension mismatch throws; floor clamps are flagged") {
  GaussianSpec q{{0.0, 1.0}, {1.0, 1.0}};
  GaussianSpec p{{0.0}, {1.0}};
  CHECK_THROWS_AS(kl_diag_gaussian(q, p), ConfigError);

  GaussianSpec qf{{0.0}, {0.0}};
  GaussianSpec pf{{0.0}, {1.0}};
  bool clamped = false;
  const double v = kl_diag_gaussian(qf, pf, &clamped);
  CHECK(clamped);
  CHECK(std::isfinite(v));
}

TEST_CASE("kl is non-negative over random specs") {
  RandomStream s(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(s.next_u64() % 6);
    GaussianSpec q, p;
    for (int i = 0; i < d; ++i) {
      q.mu.push_back(3.0 * s.gaussian());
      p.mu.push_back(3.0 * s.gaussian());
      q.sigma.push_back(0.05 + 2.0 * s.uniform01());
      p.sigma.push_back(0.05 + 2.0 * s.uniform01());
    }
    CHECK(kl_diag_gaussian(q, p) >= 0.0);
  }
}

// Monte-Carlo oracle: KL(q||p) = E_q[log q - log p], estimated on 10^6 draws.
TEST_CASE("kl agrees with a monte-carlo estimate within 3 standard errors") {
  RandomStream s(31);
  const int n = 1000000;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(s.next_u64() % 4);
    GaussianSpec q, p;
    for (int i = 0; i < d; ++i) {
      q.mu.push_back(s.gaussian());
      p.mu.push_back(s.gaussian());
      q.sigma.push_back(0.3 + s.uniform01());
      p.sigma.push_back(0.3 + s.uniform01());
    }
    const double closed = kl_diag_gaussian(q, p);

    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      double logq = 0.0, logp = 0.0;
      for (int k = 0; k < d; ++k) {
        const double x = q.mu[k] + q.sigma[k] * s.gaussian();
        const double zq = (x - q.mu[k]) / q.sigma[k];
        const double zp = (x - p.mu[k]) / p.sigma[k];
        logq += -0.5 * zq * zq - std::log(q.sigma[k]);
        logp += -0.5 * zp * zp - std::log(p.sigma[k]);
      }
      const double v = logq - logp;
      sum += v;
      sq += v * v;
    }
    const double mc = sum / n;
    const double se = std::sqrt((sq / n - mc * mc) / n);
    CHECK(std::abs(mc - closed) <= 3.0 * se);
  }
}

TEST_CASE("fd_gradient on a quadratic and a constant") {
  auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const std::vector<double> g = fd_gradient(square, {3.0}, 1e-4);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

  auto constant = [](const std::vector<double>&) { return 4.2; };
  for (double v : fd_gradient(constant, {1.0, 2.0, 3.0}, 1e-4)) CHECK(v == 0.0);
}

TEST_CASE("fd_gradient flags non-finite objectives") {
  auto bad = [](const std::vector<double>& x) { return std::log(x[0]); };
  CHECK_THROWS_AS(fd_gradient(bad, {-1.0}, 1e-4), NumericError);
}
