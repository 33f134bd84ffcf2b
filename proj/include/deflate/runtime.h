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

#ifndef DEFLATE_RUNTIME_H_
#define DEFLATE_RUNTIME_H_

#include <atomic>
#include <barrier>
#include <functional>
#include <thread>
#include <vector>

#include "deflate/core_model.h"
#include "deflate/deflation.h"

namespace deflate {

struct ShardPlan {
  int P = 1;
  // assignment[k-1] = worker owning component k.
  std::vector<int> assignment;
  // Components per worker, in increasing order.
  std::vector<std::vector<int>> owned;
};

// Component k goes to worker (k - 1) mod P.
ShardPlan shard_components(int r, int P);

// Thread count after applying the DEFLATE_LAB_THREADS cap (if set).
int capped_threads(int requested);

// Persistent worker threads that execute one round at a time. Each round
// ends at a barrier whose completion step is the single gather of that
// round.
class ShardedPool {
 public:
  explicit ShardedPool(ShardPlan plan);
  ~ShardedPool();

  ShardedPool(const ShardedPool&) = delete;
  ShardedPool& operator=(const ShardedPool&) = delete;

  // Runs work(k) for every component on its owning worker and returns after
  // the round barrier.
  void RunRound(const std::function<void(int)>& work);

  long long gathers() const { return gathers_.load(); }
  const ShardPlan& plan() const { return plan_; }

 private:
  struct Gather {
    std::atomic<long long>* counter;
    void operator()() noexcept { counter->fetch_add(1); }
  };

  void WorkerLoop(int worker);

  ShardPlan plan_;
  std::atomic<long long> gathers_{0};
  std::barrier<> start_;
  std::barrier<Gather> end_;
  const std::function<void(int)>* work_ = nullptr;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

struct RoundTimings {
  std::vector<double> seconds;
  double mean = 0.0;
  double stddev = 0.0;
};

struct ShardedRun {
  DeflationRun run;
  RoundTimings timings;
  int threads = 1;
  long long gathers = 0;
};

// parallel_deflate on P worker threads (capped by DEFLATE_LAB_THREADS).
ShardedRun run_sharded(const ProblemInstance& instance,
                       const ParallelConfig& cfg, int P);

RoundTimings summarize_timings(std::vector<double> seconds);

}  // namespace deflate

#endif  // DEFLATE_RUNTIME_H_
