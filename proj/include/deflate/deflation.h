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

#ifndef DEFLATE_DEFLATION_H_
#define DEFLATE_DEFLATION_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deflate/core_model.h"
#include "deflate/rank1.h"

namespace deflate {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Component indices k are 1-based throughout the public API; rounds are
// numbered 1..L with round 0 holding the random initialization.

struct ParallelConfig {
  int r = 1;
  int rounds = 1;
  Rank1Config rank1;
  double Q = kInfinity;  // absolute bound on ||b a^T X||_F
  bool advance_learning = false;
  // activation[k-1] = s_k. Empty means s_k = k.
  std::vector<int> activation;
  // Standard deviation of the round-0 factor entries.
  double init_scale = 0.02;
  uint64_t seed = 0;
  bool materialize_targets = false;
};

enum class Regime { kParallel, kSequential };

struct DeflationRun {
  Regime regime = Regime::kParallel;
  int m = 0;
  int d = 0;
  int r = 0;
  int rounds = 0;
  std::vector<int> activation;
  // history[l][k-1]: value broadcast by component k at the end of round l.
  std::vector<std::vector<ComponentPair>> history;
  // targets[l][k-1] = Y_{k,l}, only when materialize_targets was set.
  std::vector<std::vector<Eigen::MatrixXd>> targets;
  // Wall-clock model in subroutine iterations: sum_k T_k for sequential,
  // L * T for parallel.
  long long work_units = 0;
  int reinitializations = 0;
  std::vector<std::string> warnings;

  const ComponentPair& pair(int k, int round) const {
    return history[round][k - 1];
  }
  bool committed(int k, int round) const {
    return round >= activation[k - 1];
  }
};

struct ExactTargets {
  // targets[k-1] = Y*_k for k = 1..r+1.
  std::vector<Eigen::MatrixXd> targets;
  // components[k-1] holds sigma*_k, u*_k, v*_k.
  std::vector<SvdTriplet> components;

  Eigen::MatrixXd product(int k) const;
};

ExactTargets exact_sequential_targets(const Eigen::MatrixXd& Y, int r);

// Runs `work(k)` for every k in [1, r] and returns once all calls finished.
using RoundDispatcher =
    std::function<void(int r, const std::function<void(int)>& work)>;

void serial_dispatch(int r, const std::function<void(int)>& work);

// Shared round engine behind sequential_deflate, parallel_deflate and the
// sharded runtime. `budgets` gives T_k for the sequential regime and is
// ignored otherwise. When `round_seconds` is non-null it receives the wall
// time of each round.
DeflationRun run_deflation_engine(const ProblemInstance& instance,
                                  const ParallelConfig& cfg, Regime regime,
                                  const std::vector<int>& budgets,
                                  const RoundDispatcher& dispatch,
                                  std::vector<double>* round_seconds = nullptr);

DeflationRun sequential_deflate(const ProblemInstance& instance, int r,
                                const std::vector<int>& budgets,
                                const Rank1Config& rank1, uint64_t seed = 0);

DeflationRun parallel_deflate(const ProblemInstance& instance,
                              const ParallelConfig& cfg);

ComponentPair project_frobenius(const ComponentPair& pair,
                                const Eigen::MatrixXd& X, double Q);

// Sum of b a^T over components committed at `round`, in component order.
Eigen::MatrixXd reconstruct_weight(const DeflationRun& run, int round);

}  // namespace deflate

#endif  // DEFLATE_DEFLATION_H_
