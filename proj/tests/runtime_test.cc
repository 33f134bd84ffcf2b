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
#include <cstdlib>
#include <string>

#include <gtest/gtest.h>

#include "deflate/errors.h"
#include "deflate/runtime.h"

namespace deflate {
namespace {

class ThreadEnv {
 public:
  explicit ThreadEnv(const char* value) {
    if (const char* old = std::getenv("DEFLATE_LAB_THREADS")) saved_ = old;
    if (value) {
      setenv("DEFLATE_LAB_THREADS", value, 1);
    } else {
      unsetenv("DEFLATE_LAB_THREADS");
    }
  }
  ~ThreadEnv() {
    if (saved_.empty()) {
      unsetenv("DEFLATE_LAB_THREADS");
    } else {
      setenv("DEFLATE_LAB_THREADS", saved_.c_str(), 1);
    }
  }

 private:
  std::string saved_;
};

bool SameHistory(const DeflationRun& a, const DeflationRun& b) {
  if (a.history.size() != b.history.size()) return false;
  for (size_t l = 0; l < a.history.size(); ++l) {
    if (a.history[l].size() != b.history[l].size()) return false;
    for (size_t k = 0; k < a.history[l].size(); ++k) {
      if (a.history[l][k].a != b.history[l][k].a) return false;
      if (a.history[l][k].b != b.history[l][k].b) return false;
    }
  }
  return true;
}

TEST(ShardPlanTest, RoundRobin) {
  const ShardPlan p = shard_components(5, 2);
  EXPECT_EQ(p.owned[0], (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(p.owned[1], (std::vector<int>{2, 4}));
  EXPECT_EQ(p.assignment, (std::vector<int>{0, 1, 0, 1, 0}));
}

TEST(ShardPlanTest, SingleWorker) {
  const ShardPlan p = shard_components(4, 1);
  ASSERT_EQ(p.owned.size(), 1u);
  EXPECT_EQ(p.owned[0], (std::vector<int>{1, 2, 3, 4}));
}

TEST(ShardPlanTest, MoreWorkersThanComponents) {
  const ShardPlan p = shard_components(3, 5);
  int loaded = 0;
  for (const auto& o : p.owned) loaded += !o.empty();
  EXPECT_EQ(loaded, 3);
}

TEST(ShardPlanTest, BalancedAndExhaustive) {
  for (int r = 1; r <= 20; ++r) {
    for (int P = 1; P <= 7; ++P) {
      const ShardPlan p = shard_components(r, P);
      std::vector<int> seen(r + 1, 0);
      size_t lo = r, hi = 0;
      for (const auto& o : p.owned) {
        for (int k : o) ++seen[k];
        lo = std::min(lo, o.size());
        hi = std::max(hi, o.size());
      }
      for (int k = 1; k <= r; ++k) EXPECT_EQ(seen[k], 1);
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

TEST(ShardPlanTest, RejectsNonPositiveP) {
  EXPECT_THROW(shard_components(4, 0), Error);
  EXPECT_THROW(shard_components(4, -2), Error);
}

TEST(ThreadCapTest, Cap) {
  {
    ThreadEnv env(nullptr);
    EXPECT_EQ(capped_threads(6), 6);
  }
  {
    ThreadEnv env("2");
    EXPECT_EQ(capped_threads(6), 2);
    EXPECT_EQ(capped_threads(1), 1);
  }
  {
    ThreadEnv env("abc");
    EXPECT_THROW(capped_threads(4), Error);
  }
  {
    ThreadEnv env("0");
    EXPECT_THROW(capped_threads(4), Error);
  }
}

TEST(ShardedPoolTest, OneGatherPerRound) {
  ShardedPool pool(shard_components(7, 3));
  std::vector<int> hits(8, 0);
  for (int round = 0; round < 5; ++round) {
    pool.RunRound([&](int k) { ++hits[k]; });
  }
  EXPECT_EQ(pool.gathers(), 5);
  for (int k = 1; k <= 7; ++k) EXPECT_EQ(hits[k], 5);
}

TEST(RunShardedTest, IdenticalAcrossWorkerCounts) {
  ThreadEnv env(nullptr);
  const ProblemInstance inst = generate_instance(
      100, 200, 500, 16, SpectralProfile::Exponential(), 0.0, 7);
  ParallelConfig cfg;
  cfg.r = 16;
  cfg.rounds = 20;
  cfg.seed = 7;
  const DeflationRun serial = parallel_deflate(inst, cfg);
  const ShardedRun one = run_sharded(inst, cfg, 1);
  const ShardedRun four = run_sharded(inst, cfg, 4);
  EXPECT_TRUE(SameHistory(serial, one.run));
  EXPECT_TRUE(SameHistory(one.run, four.run));
  EXPECT_EQ(four.threads, 4);
  EXPECT_EQ(four.gathers, cfg.rounds);
  EXPECT_EQ(static_cast<int>(four.timings.seconds.size()), cfg.rounds);
}

TEST(RunShardedTest, RespectsThreadCap) {
  ThreadEnv env("2");
  const ProblemInstance inst = generate_instance(
      20, 30, 80, 4, SpectralProfile::Exponential(), 0.0, 2);
  ParallelConfig cfg;
  cfg.r = 4;
  cfg.rounds = 8;
  const ShardedRun run = run_sharded(inst, cfg, 4);
  EXPECT_EQ(run.threads, 2);
  EXPECT_TRUE(SameHistory(run.run, parallel_deflate(inst, cfg)));
}

TEST(RunShardedTest, PropagatesErrors) {
  const ProblemInstance inst = generate_instance(
      20, 30, 80, 4, SpectralProfile::Exponential(), 0.0, 2);
  ParallelConfig cfg;
  cfg.r = 4;
  cfg.rounds = 8;
  cfg.Q = 0.5 * inst.sigma_Y[0];
  EXPECT_THROW(run_sharded(inst, cfg, 2), Error);
}

TEST(TimingTest, MeanAndStd) {
  const RoundTimings t = summarize_timings({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(t.mean, 2.0);
  EXPECT_NEAR(t.stddev, std::sqrt(2.0 / 3.0), 1e-12);  // population
}

}  // namespace
}  // namespace deflate
