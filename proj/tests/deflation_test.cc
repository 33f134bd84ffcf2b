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
#include "deflate/random.h"
#include "deflate/rank1.h"
#include "deflate/theory.h"

namespace deflate {
namespace {

ProblemInstance Desk(uint64_t seed = 1) {
  return generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.0, seed);
}

// A noiseless instance whose W* is the rank-1 product b a^T.
ProblemInstance RankOneInstance(uint64_t seed) {
  return generate_instance(12, 8, 40, 1, SpectralProfile::Exponential(), 0.0, seed);
}

TEST(ExactTargetsTest, FirstTargetIsY) {
  Rng rng(1);
  const Eigen::MatrixXd Y = rng.GaussianMatrix(6, 9);
  const ExactTargets t = exact_sequential_targets(Y, 1);
  ASSERT_EQ(t.targets.size(), 2u);
  EXPECT_EQ((t.targets[0] - Y).norm(), 0.0);
}

TEST(ExactTargetsTest, Diagonal) {
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(3, 3);
  Y(0, 0) = 3;
  Y(1, 1) = 1;
  const ExactTargets t = exact_sequential_targets(Y, 1);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(3, 3);
  want(1, 1) = 1;
  EXPECT_LT((t.targets[1] - want).norm(), 1e-14);
}

TEST(ExactTargetsTest, TelescopingReconstruction) {
  const ProblemInstance inst = Desk(4);
  const int r = 5;
  const ExactTargets t = exact_sequential_targets(inst.Y, r);
  Eigen::MatrixXd sum = t.targets[r];
  for (int k = 1; k <= r; ++k) sum += t.product(k);
  EXPECT_LT((sum - inst.Y).norm(), 1e-9 * inst.Y.norm());
}

TEST(ExactTargetsTest, RefusesTies) {
  const Eigen::MatrixXd Y = Eigen::MatrixXd::Identity(3, 3);
  try {
    exact_sequential_targets(Y, 2);
    FAIL() << "expected a degenerate-gap error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateGap);
  }
}

TEST(SequentialTest, RankOneTruthOneSweep) {
  const ProblemInstance inst = RankOneInstance(2);
  const DeflationRun run = sequential_deflate(inst, 1, {1}, Rank1Config{}, 2);
  const DeflationTrace t = decompose_errors(run, inst);
  EXPECT_LT(t.G[t.index(1, 1)], 1e-8 * t.scale);
}

TEST(SequentialTest, ZeroComponents) {
  const ProblemInstance inst = Desk();
  const DeflationRun run = sequential_deflate(inst, 0, {}, Rank1Config{}, 1);
  EXPECT_EQ(run.r, 0);
  const Eigen::MatrixXd W = reconstruct_weight(run, run.rounds);
  EXPECT_EQ(W.rows(), inst.m);
  EXPECT_EQ(W.cols(), inst.d);
  EXPECT_EQ(W.norm(), 0.0);
}

TEST(SequentialTest, BudgetsMustMatch) {
  const ProblemInstance inst = Desk();
  EXPECT_THROW(sequential_deflate(inst, 3, {10, 10}, Rank1Config{}, 1), Error);
}

TEST(SequentialTest, MismatchFrozenAfterExtraction) {
  const ProblemInstance inst = Desk(3);
  Rank1Config rc;
  rc.inner_iters = 2;
  const DeflationRun run = sequential_deflate(inst, 5, std::vector<int>(5, 2), rc, 3);
  const DeflationTrace t = decompose_errors(run, inst);
  for (int k = 1; k <= 5; ++k) {
    const int s = run.activation[k - 1];
    for (int l = s; l <= run.rounds; ++l) {
      EXPECT_EQ(t.mismatch[t.index(k, l)], t.mismatch[t.index(k, s)]);
    }
  }
  EXPECT_EQ(run.work_units, 10);
}

TEST(ParallelTest, FirstTargetIsAlwaysY) {
  const ProblemInstance inst = Desk(2);
  ParallelConfig cfg;
  cfg.r = 3;
  cfg.rounds = 4;
  cfg.seed = 2;
  cfg.materialize_targets = true;
  const DeflationRun run = parallel_deflate(inst, cfg);
  for (int l = 1; l <= cfg.rounds; ++l) {
    EXPECT_EQ((run.targets[l][0] - inst.Y).norm(), 0.0);
  }
  // Later targets deflate the previous round's broadcasts.
  for (int l = 1; l <= cfg.rounds; ++l) {
    Eigen::MatrixXd want = inst.Y;
    for (int k = 1; k <= 2; ++k) {
      const ComponentPair& p = run.pair(k, l - 1);
      want -= p.b * (p.a.transpose() * inst.X);
      EXPECT_LT((run.targets[l][k] - want).norm(), 1e-10 * inst.Y.norm());
    }
  }
}

TEST(ParallelTest, SingleComponentBaseCase) {
  const ProblemInstance inst = Desk(5);
  ParallelConfig cfg;
  cfg.r = 1;
  cfg.rounds = 4;
  cfg.rank1.inner_iters = 2;
  cfg.seed = 5;
  const DeflationRun run = parallel_deflate(inst, cfg);
  const DeflationTrace t = decompose_errors(run, inst);
  for (int l = 0; l <= cfg.rounds; ++l) {
    // With an exact target, G coincides with D and B vanishes.
    EXPECT_NEAR(t.G[t.index(1, l)], t.D[t.index(1, l)], 1e-12 * t.scale);
    EXPECT_EQ(t.B[t.index(1, l)], 0.0);
  }
}

TEST(ParallelTest, SingleComponentContractsAtProbedRate) {
  const ProblemInstance inst = Desk(1);
  ParallelConfig cfg;
  cfg.r = 1;
  cfg.rounds = 5;
  cfg.seed = 1;
  const DeflationRun run = parallel_deflate(inst, cfg);
  const DeflationTrace t = decompose_errors(run, inst);
  const double F = estimate_contraction(inst, 1, cfg.rank1, 20, 1).value;
  for (int l = 2; l <= cfg.rounds; ++l) {
    EXPECT_LE(t.G[t.index(1, l)] / t.scale,
              F * t.G[t.index(1, l - 1)] / t.scale + 1e-12)
        << "round " << l << ", probed F = " << F;
  }
}

TEST(ParallelTest, ScheduleError) {
  const ProblemInstance inst = Desk();
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 3;
  try {
    parallel_deflate(inst, cfg);
    FAIL() << "expected a schedule error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchedule);
  }
}

TEST(ParallelTest, QBelowSigmaOneRejected) {
  const ProblemInstance inst = Desk();
  ParallelConfig cfg;
  cfg.r = 2;
  cfg.rounds = 3;
  cfg.Q = 0.5 * inst.sigma_scale;
  EXPECT_THROW(parallel_deflate(inst, cfg), Error);
}

TEST(ParallelTest, ActivationDiscipline) {
  const ProblemInstance inst = Desk(6);
  ParallelConfig cfg;
  cfg.r = 3;
  cfg.rounds = 8;
  cfg.activation = {1, 3, 6};
  cfg.seed = 6;
  const DeflationRun run = parallel_deflate(inst, cfg);
  for (int k = 1; k <= 3; ++k) {
    for (int l = 1; l < cfg.activation[k - 1]; ++l) {
      EXPECT_EQ((run.pair(k, l).a - run.pair(k, 0).a).norm(), 0.0);
      EXPECT_EQ((run.pair(k, l).b - run.pair(k, 0).b).norm(), 0.0);
    }
    const int s = cfg.activation[k - 1];
    EXPECT_NE((run.pair(k, s).a - run.pair(k, s - 1).a).norm(), 0.0);
  }
}

TEST(ParallelTest, AdvanceLearningStaysPrivate) {
  const ProblemInstance inst = Desk(6);
  ParallelConfig cfg;
  cfg.r = 3;
  cfg.rounds = 8;
  cfg.activation = {1, 3, 6};
  cfg.seed = 6;
  cfg.advance_learning = true;
  const DeflationRun run = parallel_deflate(inst, cfg);
  ParallelConfig plain = cfg;
  plain.advance_learning = false;
  const DeflationRun base = parallel_deflate(inst, plain);
  // Component 1 never sees dormant workers, so it is unaffected.
  for (int l = 0; l <= cfg.rounds; ++l) {
    EXPECT_EQ((run.pair(1, l).b - base.pair(1, l).b).norm(), 0.0);
  }
  // Before activation the broadcast value of component 3 is its init.
  for (int l = 0; l < 6; ++l) {
    EXPECT_EQ((run.pair(3, l).a - base.pair(3, 0).a).norm(), 0.0);
  }
}

TEST(ParallelTest, ProjectionSoundness) {
  const ProblemInstance inst = Desk(7);
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 10;
  cfg.seed = 7;
  cfg.Q = 1.2 * inst.sigma_scale;
  const DeflationRun run = parallel_deflate(inst, cfg);
  const GramSystem gram(inst.X);
  for (int l = 1; l <= cfg.rounds; ++l) {
    for (int k = 1; k <= cfg.r; ++k) {
      EXPECT_LE(product_norm(gram, run.pair(k, l)), cfg.Q * (1 + 1e-9));
    }
  }
}

TEST(ParallelTest, DeskRunConverges) {
  const ProblemInstance inst = Desk(8);
  ParallelConfig cfg;
  cfg.r = 5;
  cfg.rounds = 15;
  cfg.seed = 8;
  const DeflationRun run = parallel_deflate(inst, cfg);
  const DeflationTrace t = weight_errors(run, inst);
  EXPECT_LT(t.rel_weight_error.back(), 1e-2);
}

TEST(ProjectFrobeniusTest, Rescales) {
  Rng rng(3);
  const Eigen::MatrixXd X = rng.GaussianMatrix(4, 10);
  ComponentPair p{rng.GaussianVector(4), rng.GaussianVector(5)};
  const double norm = p.b.norm() * (X.transpose() * p.a).norm();
  p.b *= 3.0 / norm;
  const ComponentPair out = project_frobenius(p, X, 2.0);
  EXPECT_NEAR(out.b.norm() * (X.transpose() * out.a).norm(), 2.0, 1e-14);
  EXPECT_EQ((out.a - p.a).norm(), 0.0);
}

TEST(ProjectFrobeniusTest, IdentityInsideBallAndForInfinity) {
  Rng rng(3);
  const Eigen::MatrixXd X = rng.GaussianMatrix(4, 10);
  const ComponentPair p{rng.GaussianVector(4), rng.GaussianVector(5)};
  const double norm = p.b.norm() * (X.transpose() * p.a).norm();
  for (double Q : {norm, 2 * norm, kInfinity}) {
    const ComponentPair out = project_frobenius(p, X, Q);
    EXPECT_EQ((out.a - p.a).norm(), 0.0);
    EXPECT_EQ((out.b - p.b).norm(), 0.0);
  }
  const ComponentPair zero{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(5)};
  EXPECT_EQ(project_frobenius(zero, X, 1.0).b.norm(), 0.0);
}

TEST(ReconstructWeightTest, ExactComponentsMeetNoiselessBound) {
  const ProblemInstance inst = Desk(9);
  const ExactTargets exact = exact_sequential_targets(inst.Y_clean, 3);
  const GramSystem gram(inst.X);
  DeflationRun run;
  run.m = inst.m;
  run.d = inst.d;
  run.r = 3;
  run.rounds = 0;
  run.activation = {0, 0, 0};
  run.history.resize(1);
  for (int k = 1; k <= 3; ++k) {
    const SvdTriplet& c = exact.components[k - 1];
    run.history[0].push_back({gram.Solve(inst.X * (c.sigma * c.v)), c.u});
  }
  const Eigen::MatrixXd W = reconstruct_weight(run, 0);
  const double tail = inst.sigma_scale * tail_sum(inst.sigma_Y, 3);
  EXPECT_LE((inst.W_star - W).norm(), tail / inst.sigma_min_x + 1e-9);
  EXPECT_NEAR(noiseless_bound(inst, run), tail / inst.sigma_min_x,
              1e-9 * tail / inst.sigma_min_x);
}

}  // namespace
}  // namespace deflate
