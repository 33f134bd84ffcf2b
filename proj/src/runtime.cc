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

#include "deflate/runtime.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "deflate/errors.h"

namespace deflate {

ShardPlan shard_components(int r, int P) {
  if (P < 1) throw Error(ErrorKind::kParameter, "P must be >= 1");
  if (r < 0) throw Error(ErrorKind::kParameter, "r must be >= 0");
  ShardPlan plan;
  plan.P = P;
  plan.assignment.resize(r);
  plan.owned.assign(P, {});
  for (int k = 1; k <= r; ++k) {
    const int w = (k - 1) % P;
    plan.assignment[k - 1] = w;
    plan.owned[w].push_back(k);
  }
  return plan;
}

int capped_threads(int requested) {
  if (requested < 1) throw Error(ErrorKind::kParameter, "P must be >= 1");
  const char* env = std::getenv("DEFLATE_LAB_THREADS");
  if (env == nullptr || *env == '\0') return requested;
  char* end = nullptr;
  const long cap = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || cap < 1) {
    throw Error(ErrorKind::kConfig,
                std::string("DEFLATE_LAB_THREADS must be a positive integer, "
                            "got '") + env + "'");
  }
  return static_cast<int>(std::min<long>(requested, cap));
}

ShardedPool::ShardedPool(ShardPlan plan)
    : plan_(std::move(plan)),
      start_(plan_.P + 1),
      end_(plan_.P + 1, Gather{&gathers_}) {
  threads_.reserve(plan_.P);
  for (int w = 0; w < plan_.P; ++w) {
    threads_.emplace_back([this, w] { WorkerLoop(w); });
  }
}

ShardedPool::~ShardedPool() {
  stop_ = true;
  start_.arrive_and_wait();
  for (std::thread& t : threads_) t.join();
}

void ShardedPool::RunRound(const std::function<void(int)>& work) {
  work_ = &work;
  start_.arrive_and_wait();
  end_.arrive_and_wait();
  work_ = nullptr;
}

void ShardedPool::WorkerLoop(int worker) {
  for (;;) {
    start_.arrive_and_wait();
    if (stop_) return;
    for (int k : plan_.owned[worker]) (*work_)(k);
    end_.arrive_and_wait();
  }
}

RoundTimings summarize_timings(std::vector<double> seconds) {
  RoundTimings t;
  t.seconds = std::move(seconds);
  if (t.seconds.empty()) return t;
  double sum = 0.0;
  for (double s : t.seconds) sum += s;
  t.mean = sum / t.seconds.size();
  double var = 0.0;
  for (double s : t.seconds) var += (s - t.mean) * (s - t.mean);
  t.stddev = std::sqrt(var / t.seconds.size());
  return t;
}

ShardedRun run_sharded(const ProblemInstance& instance,
                       const ParallelConfig& cfg, int P) {
  ShardedRun out;
  out.threads = capped_threads(P);
  ShardedPool pool(shard_components(cfg.r, out.threads));
  const RoundDispatcher dispatch = [&pool](int,
                                           const std::function<void(int)>& w) {
    pool.RunRound(w);
  };
  std::vector<double> seconds;
  out.run = run_deflation_engine(instance, cfg, Regime::kParallel, {},
                                 dispatch, &seconds);
  out.timings = summarize_timings(std::move(seconds));
  out.gathers = pool.gathers();
  return out;
}

}  // namespace deflate
