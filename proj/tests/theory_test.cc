// Copyright 2026 The Deflate Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <gtest/gtest.h>

#include "deflate/errors.h"
#include "deflate/random.h"
#include "deflate/theory.h"

namespace deflate {
namespace {

// Bisection oracle for y e^y = x on the lower branch y <= -1.
double LowerBranchOracle(double x) {
  double lo = -60.0, hi = -1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    // y e^y falls from 0- to -1/e as y goes from -inf to -1.
    (mid * std::exp(mid) > x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

RatePlan Plan(std::vector<double> sigma, std::vector<double> F, double Q) {
  return rate_plan(sigma, F, Q);
}

TEST(LambertTest, BranchPoint) {
  EXPECT_NEAR(lambert_w_neg1(-std::exp(-1.0)), -1.0, 1e-6);
}

TEST(LambertTest, MatchesOracle) {
  EXPECT_NEAR(lambert_w_neg1(-0.01), LowerBranchOracle(-0.01), 1e-10);
  EXPECT_NEAR(lambert_w_neg1(-0.01), -6.4728, 1e-4);
  EXPECT_NEAR(lambert_w_neg1(-0.3466), LowerBranchOracle(-0.3466), 1e-10);
  EXPECT_NEAR(lambert_w_neg1(-0.3466), -1.386, 1e-3);
  const double ln4 = std::log(4.0);
  EXPECT_NEAR(lambert_w_neg1(-ln4 / 4), -ln4, 1e-9);
}

TEST(LambertTest, Residual) {
  for (double x : {-0.36, -0.3, -0.1, -1e-3, -1e-8}) {
    const double y = lambert_w_neg1(x);
    EXPECT_LE(std::abs(y * std::exp(y) - x), 1e-12 * std::abs(x)) << x;
    EXPECT_LE(y, -1.0);
  }
}

TEST(LambertTest, Domain) {
  EXPECT_THROW(lambert_w_neg1(0.1), Error);
  EXPECT_THROW(lambert_w_neg1(-0.5), Error);
  EXPECT_THROW(lambert_w_neg1(0.0), Error);
}

TEST(WHatTest, Examples) {
  EXPECT_NEAR(w_hat(std::exp(-1.0)), 1.0, 1e-6);
  EXPECT_NEAR(w_hat(0.01), 6.4728, 1e-4);
  const double w = w_hat(0.3466);
  EXPECT_NEAR(w, 1.386, 1e-3);
  const double L = std::log(1 / 0.3466);
  EXPECT_LE(w, L + std::log(L) + 1);
}

TEST(WHatTest, ClampAndDomain) {
  bool clamped = false;
  EXPECT_EQ(w_hat(0.5, &clamped), 1.0);
  EXPECT_TRUE(clamped);
  EXPECT_THROW(w_hat(0.0), Error);
  EXPECT_THROW(w_hat(-1.0), Error);
}

TEST(WHatTest, ExplicitUpperBound) {
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    const double a = std::exp(-1.0 - 27.0 * rng.Uniform());
    const double L = std::log(1 / a);
    EXPECT_LE(w_hat(a), L + std::log(L) + 1 + 1e-12) << a;
  }
}

TEST(EffectiveRatesTest, Examples) {
  EXPECT_EQ(effective_rates({0.3}), std::vector<double>{0.3});
  const auto m = effective_rates({0.5, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(m[0], 0.5);
  EXPECT_DOUBLE_EQ(m[1], 0.75);
  EXPECT_NEAR(m[2], 0.833333333333, 1e-12);
  const auto n = effective_rates({0.9, 0.1});
  EXPECT_DOUBLE_EQ(n[0], 0.9);
  EXPECT_DOUBLE_EQ(n[1], 0.95);
}

TEST(EffectiveRatesTest, RandomVectorsStayBelowOne) {
  Rng rng(13);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> F(1 + t % 25);
    for (double& f : F) f = rng.Uniform();
    const auto m = effective_rates(F);
    for (size_t k = 0; k < m.size(); ++k) {
      EXPECT_GT(m[k], 0.0);
      EXPECT_LT(m[k], 1.0);
      if (k > 0) EXPECT_GE(m[k], m[k - 1]);
    }
  }
}

TEST(EffectiveRatesTest, Domain) {
  EXPECT_THROW(effective_rates({0.5, 1.0}), Error);
  EXPECT_THROW(effective_rates({0.0}), Error);
}

TEST(RatePlanTest, ScalesAndConstants) {
  const RatePlan p = Plan({1, 0.5, 0.25}, {0.5, 0.5, 0.5}, 2.0);
  EXPECT_DOUBLE_EQ(p.R[0], 3.0);
  EXPECT_DOUBLE_EQ(p.R[1], 2.5);
  EXPECT_DOUBLE_EQ(p.R[2], 2.25);
  EXPECT_DOUBLE_EQ(p.C[1], 7.0);
  // gamma_k = 1/(k+1) + k m_k/(k+1)
  EXPECT_DOUBLE_EQ(p.gamma[0], 0.5 + 0.5 * 0.5);
  EXPECT_DOUBLE_EQ(p.gamma[1], 1.0 / 3 + 2 * 0.75 / 3);
}

TEST(RatePlanTest, Refusals) {
  EXPECT_THROW(Plan({1, 1}, {0.5, 0.5}, 2.0), Error);
  EXPECT_THROW(Plan({1, 0.5}, {0.5, 0.5}, 0.5), Error);
  EXPECT_THROW(Plan({1, 0.5}, {0.5, 0.5}, kInfinity), Error);
  const RatePlan p = Plan({1, 0.5}, {0.5, 0.5}, 1.5);
  EXPECT_FALSE(p.warnings.empty());
}

TEST(WarmupTest, SingleComponent) {
  const RatePlan p = Plan({1}, {0.5}, 2.0);
  EXPECT_EQ(warmup_schedule(p, ScheduleForm::kExact).s, std::vector<int>{1});
}

TEST(WarmupTest, SecondActivation) {
  const RatePlan p = Plan({1, 0.5, 0.25}, {0.5, 0.5, 0.5}, 2.0);
  const WarmupSchedule w = warmup_schedule(p, ScheduleForm::kExact);
  EXPECT_EQ(w.s[0], 1);
  EXPECT_NEAR(w.s[1], 23, 1);
}

TEST(WarmupTest, StrictlyIncreasing) {
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    const int r = 2 + t % 5;
    std::vector<double> sigma(r), F(r);
    double s = 1.0;
    for (int k = 0; k < r; ++k) {
      sigma[k] = s;
      s *= 0.3 + 0.6 * rng.Uniform();
      F[k] = 0.05 + 0.9 * rng.Uniform();
    }
    const RatePlan p = rate_plan(sigma, F, 2.0 + rng.Uniform());
    for (ScheduleForm form : {ScheduleForm::kExact, ScheduleForm::kExactGlobal,
                              ScheduleForm::kSimplified}) {
      const WarmupSchedule w = warmup_schedule(p, form);
      for (int k = 1; k < r; ++k) EXPECT_GT(w.s[k], w.s[k - 1]);
    }
  }
}

TEST(EnvelopeTest, HandValue) {
  const RatePlan p = Plan({1}, {0.5}, 1.0);
  ASSERT_DOUBLE_EQ(p.R[0], 2.0);
  EXPECT_DOUBLE_EQ(convergence_envelope(p, 1, 1, 1), 6.0);
  EXPECT_DOUBLE_EQ(convergence_envelope(p, 1, 1, 0), 3.0 * p.R[0]);
}

TEST(EnvelopeTest, VanishesInTheLimit) {
  for (double F : {0.1, 0.5, 0.9}) {
    const RatePlan p = Plan({1}, {F}, 2.0);
    EXPECT_LT(convergence_envelope(p, 1, 1, 201), 1e-6 * p.R[0]);
  }
}

TEST(SurrogateTest, CeilingsHold) {
  const RatePlan p = Plan({1, 0.5, 0.25}, {0.3, 0.3, 0.3}, 2.0);
  const WarmupSchedule w = warmup_schedule(p, ScheduleForm::kExact);
  const std::vector<double> D = {0.5, 0.4, 0.3};
  const SurrogatePlan sp = surrogate_sequences(p, w.s, w.s_hat, D, w.s.back() + 10);
  for (int k = 1; k <= 3; ++k) {
    for (double b : sp.B_hat[k - 1]) EXPECT_LE(b, p.R[k - 1] + 1e-12);
    EXPECT_LE(sp.boundary_G[k - 1], 3 * p.R[k - 1]);
  }
  EXPECT_FALSE(sp.boundary_exceeds_ceiling);
}

TEST(FitDecayTest, ExactGeometric) {
  std::vector<double> G(31);
  for (int l = 0; l <= 30; ++l) G[l] = 2.0 * std::pow(0.6, l);
  const DecayFit f = fit_decay(G, 1);
  EXPECT_NEAR(f.m_hat, 0.6, 1e-9);
  EXPECT_NEAR(f.C_hat, 2.0, 1e-9);
  EXPECT_EQ(f.s_hat, 0);
  EXPECT_EQ(detect_decay_start(G, 1), 0);
}

TEST(FitDecayTest, LinearPrefactor) {
  const double m = 0.5, R = 2.0;
  std::vector<double> G(31);
  for (int l = 0; l <= 30; ++l) G[l] = 3 * R * (l + 1) * std::pow(m, l);
  const DecayFit f = fit_decay(G, 1);
  EXPECT_NEAR(f.m_hat, m, 0.05);
}

TEST(FitDecayTest, DetectsLateStart) {
  std::vector<double> G(31, 1.0);
  for (int l = 6; l <= 30; ++l) G[l] = std::pow(0.5, l - 5);
  G[3] = 1.2;  // a bump before the decay sets in
  const DecayFit f = fit_decay(G, 1);
  EXPECT_EQ(f.s_hat, 5);
  EXPECT_NEAR(f.m_hat, 0.5, 1e-9);
}

TEST(FitDecayTest, FloorCountsAsConverged) {
  std::vector<double> G(21, 1e-16);
  G[0] = 1.0;
  G[1] = 1e-3;
  G[2] = 1e-6;
  G[3] = 1e-9;
  DecayFitOptions opt;
  opt.floor = 1e-14;
  const DecayFit f = fit_decay(G, 1, opt);
  EXPECT_EQ(f.points, 3);
  EXPECT_NEAR(f.m_hat, 1e-3, 1e-9);
}

TEST(FitDecayTest, NeverDecaying) {
  std::vector<double> G(20);
  for (int l = 0; l < 20; ++l) G[l] = 1.0 + 0.1 * (l % 2);
  try {
    fit_decay(G, 1);
    FAIL() << "expected a no-fit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoFit);
  }
}

TEST(NoiseFloorTest, Formula) {
  EXPECT_DOUBLE_EQ(noise_floor(1.0, 5, 80, 200), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(noise_floor(0.1, 10, 200, 500), 0.2);
}

}  // namespace
}  // namespace deflate
