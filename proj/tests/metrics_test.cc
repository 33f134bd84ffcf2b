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

#include "deflate/core_model.h"
#include "deflate/deflation.h"
#include "deflate/errors.h"
#include "deflate/metrics.h"
#include "deflate/properties.h"
#include "deflate/random.h"
#include "deflate/theory.h"

namespace deflate {
namespace {

ProblemInstance Desk(uint64_t seed = 1) {
  return generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.0, seed);
}

// A run whose components are the exact starred ones at every round.
DeflationRun StarredRun(const ProblemInstance& inst, int r, int rounds) {
  const ExactTargets exact = exact_sequential_targets(inst.Y_clean, r);
  const GramSystem gram(inst.X);
  DeflationRun run;
  run.m = inst.m;
  run.d = inst.d;
  run.r = r;
  run.rounds = rounds;
  for (int k = 1; k <= r; ++k) run.activation.push_back(k);
  std::vector<ComponentPair> pairs;
  for (int k = 1; k <= r; ++k) {
    const SvdTriplet& c = exact.components[k - 1];
    pairs.push_back({gram.Solve(inst.X * (c.sigma * c.v)), c.u});
  }
  run.history.assign(rounds + 1, pairs);
  return run;
}

TEST(IdealFitTest, RankOneTargetHasZeroResidual) {
  Rng rng(1);
  const Eigen::MatrixXd X = rng.GaussianMatrix(5, 20);
  const Eigen::VectorXd b = rng.GaussianVector(7), a = rng.GaussianVector(5);
  const Eigen::MatrixXd Y = b * (a.transpose() * X);
  const IdealFit fit = ideal_rank1_fit(Y, X);
  EXPECT_LT((fit.product - Y).norm(), 1e-10 * Y.norm());
  // The factor pair reproduces the product through X.
  EXPECT_LT((fit.pair.b * (fit.pair.a.transpose() * X) - fit.product).norm(),
            1e-8 * Y.norm());
}

TEST(IdealFitTest, CleanTargetGivesStarredComponent) {
  const ProblemInstance inst = Desk(2);
  const ExactTargets exact = exact_sequential_targets(inst.Y_clean, 3);
  for (int k = 1; k <= 3; ++k) {
    const IdealFit fit = ideal_rank1_fit(exact.targets[k - 1], inst.X);
    EXPECT_LT((fit.product - exact.product(k)).norm(), 1e-9 * inst.sigma_scale);
  }
}

TEST(IdealFitTest, EckartYoungResidual) {
  Rng rng(3);
  const Eigen::MatrixXd X = rng.GaussianMatrix(6, 20);
  const Eigen::MatrixXd Y = rng.GaussianMatrix(8, 20);
  const IdealFit fit = ideal_rank1_fit(Y, X);
  const Eigen::VectorXd s = singular_values(Y);
  const double tail = std::sqrt(s.squaredNorm() - s[0] * s[0]);
  EXPECT_NEAR((Y - fit.product).norm(), tail, 1e-8);
}

TEST(IdealFitTest, TieIsNonUnique) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(3, 5);
  const Eigen::MatrixXd Y = X;
  try {
    ideal_rank1_fit(Y, X);
    FAIL() << "expected a nonunique-fit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonUniqueFit);
  }
}

TEST(DecomposeTest, FirstComponentHasNoMismatch) {
  const ProblemInstance inst = Desk(3);
  ParallelConfig cfg;
  cfg.r = 4;
  cfg.rounds = 6;
  cfg.seed = 3;
  const DeflationTrace t = decompose_errors(parallel_deflate(inst, cfg), inst);
  for (int l = 0; l <= cfg.rounds; ++l) EXPECT_EQ(t.B[t.index(1, l)], 0.0);
}

TEST(DecomposeTest, ExactComponentsHaveZeroErrors) {
  const ProblemInstance inst = Desk(4);
  const DeflationTrace t = decompose_errors(StarredRun(inst, 5, 5), inst);
  for (size_t i = 0; i < t.G.size(); ++i) {
    EXPECT_LT(t.D[i], 1e-9 * t.scale);
    EXPECT_LT(t.B[i], 1e-9 * t.scale);
    EXPECT_LT(t.G[i], 1e-9 * t.scale);
  }
  EXPECT_LT(t.rel_weight_error.back(), 1e-9);
}

TEST(DecomposeTest, RowInvariantsOnParallelRuns) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ProblemInstance inst = Desk(seed);
    ParallelConfig cfg;
    cfg.r = 5;
    cfg.rounds = 12;
    cfg.rank1.inner_iters = 3;
    cfg.seed = seed;
    const DeflationRun run = parallel_deflate(inst, cfg);
    DecomposeOptions opt;
    opt.spectral_mismatch = true;
    const DeflationTrace t = decompose_errors(run, inst, opt);
    for (size_t i = 0; i < t.G.size(); ++i) {
      EXPECT_GE(t.D[i], 0.0);
      EXPECT_GE(t.B[i], 0.0);
      EXPECT_GE(t.G[i], 0.0);
    }
    EXPECT_EQ(check_triangle(t).violations, 0);
    EXPECT_EQ(check_mismatch_bound(t).violations, 0);
    std::vector<double> F(5);
    for (int k = 1; k <= 5; ++k) {
      F[k - 1] = estimate_contraction(inst, k, cfg.rank1, 10, seed).value;
    }
    const RowCheck b = check_b_bound(t, inst, rate_plan(inst, F, 2.0));
    EXPECT_EQ(b.violations, 0);
    EXPECT_GT(b.checked, 0);
  }
}

TEST(DecomposeTest, SelfCorrectionOnGappedProfile) {
  const ProblemInstance inst = Desk(5);
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 30;
  cfg.seed = 5;
  const DeflationTrace t = decompose_errors(parallel_deflate(inst, cfg), inst);
  for (int k = 2; k <= 5; ++k) {
    const int s = t.activation[k - 1];
    EXPECT_LT(t.mismatch[t.index(k, 30)], t.mismatch[t.index(k, s)]);
  }
}

TEST(DecomposeTest, WorkerThreeDecaysToCommonFloor) {
  const ProblemInstance inst = Desk(1);
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 30;
  cfg.seed = 1;
  const DeflationTrace t = decompose_errors(parallel_deflate(inst, cfg), inst);
  const double D = t.D[t.index(3, 30)] / t.scale;
  const double B = t.B[t.index(3, 30)] / t.scale;
  EXPECT_LT(D, 1e-9);
  EXPECT_LT(B, 1e-9);
  EXPECT_GT(t.D[t.index(3, 2)] / t.scale, 1e3 * D);
  EXPECT_GT(t.B[t.index(3, 3)] / t.scale, 1e3 * B);
}

TEST(DecomposeTest, DegenerateGapCarriesOnlyWeightErrors) {
  const ProblemInstance inst =
      generate_instance(20, 30, 80, 3, SpectralProfile::Uniform(), 0.0, 1);
  ParallelConfig cfg;
  cfg.r = 3;
  cfg.rounds = 4;
  const DeflationRun run = parallel_deflate(inst, cfg);
  try {
    const DeflationTrace t = decompose_errors(run, inst);
    EXPECT_FALSE(t.b_defined);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateGap);
  }
  const DeflationTrace w = weight_errors(run, inst);
  EXPECT_FALSE(w.has_metrics);
  EXPECT_EQ(w.rel_weight_error.size(), 5u);
}

TEST(NashTest, StarredEquilibriumHasZeroResidual) {
  const ProblemInstance inst = Desk(6);
  const NashResiduals n = nash_residual(StarredRun(inst, 5, 1), inst, 1);
  for (double r : n.residual) EXPECT_LT(r, 1e-9 * inst.sigma_scale);
}

TEST(NashTest, SingleComponentEqualsD) {
  const ProblemInstance inst = Desk(7);
  ParallelConfig cfg;
  cfg.r = 1;
  cfg.rounds = 2;
  cfg.rank1.inner_iters = 1;
  cfg.seed = 7;
  const DeflationRun run = parallel_deflate(inst, cfg);
  const DeflationTrace t = decompose_errors(run, inst);
  const NashResiduals n = nash_residual(run, inst, 2);
  EXPECT_NEAR(n.residual[0], t.D[t.index(1, 2)], 1e-10 * inst.sigma_scale);
}

TEST(NashTest, DeskRunAfterFortyRounds) {
  const ProblemInstance inst = Desk(8);
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 40;
  cfg.seed = 8;
  const NashResiduals n = nash_residual(parallel_deflate(inst, cfg), inst, 40);
  for (double r : n.residual) EXPECT_LT(r, 1e-3 * inst.sigma_scale);
}

TEST(NoiselessBoundTest, DominatesEveryRun) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ProblemInstance inst = Desk(seed);
    for (int L : {5, 10, 20}) {
      ParallelConfig cfg;
      cfg.r = 5;
      cfg.rounds = L;
      cfg.rank1.inner_iters = 2;
      cfg.seed = seed;
      const DeflationRun run = parallel_deflate(inst, cfg);
      const DeflationTrace t = weight_errors(run, inst);
      EXPECT_LE(t.abs_weight_error.back(), noiseless_bound(inst, run) + 1e-9);
    }
  }
}

}  // namespace
}  // namespace deflate
