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

#ifndef DEFLATE_DISCOVERY_H_
#define DEFLATE_DISCOVERY_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "deflate/core_model.h"
#include "deflate/deflation.h"
#include "deflate/random.h"
#include "deflate/rank1.h"

namespace deflate {

struct ModuleState {
  int id = 0;
  ProblemInstance instance;
  std::vector<ComponentPair> committed;
  ComponentPair reserve;
  int r = 0;
  double S_bar = 0.0;
  double U = 0.0;
  std::vector<ComponentPair> snapshot;
};

enum class GrowthRule { kScored, kUniform };

struct DiscoveryConfig {
  // One module per entry; each gets its own W* of this rank.
  std::vector<int> true_ranks = {1, 1, 2, 2, 4, 4};
  int m = 40;
  int d = 24;
  int n = 2000;
  SpectralProfile profile = SpectralProfile::Exponential();
  double noise_level = 0.0;
  bool whiten_x = false;
  int r_max = 4;
  int budget = 14;
  // Mini-batches cached per round and their column count.
  int batches = 2;
  int batch_size = 1000;
  int top_h = 1;
  double beta1 = 0.85;
  double beta2 = 0.85;
  // When set, U uses |S - S_bar| with the mean from before this update.
  bool pre_update_volatility = false;
  double lambda_orth = 0.0;
  Rank1Config rank1 = {Rank1Config::Method::kAls, 5, 0.0, 0.0};
  int rounds = 16;
  int warmup_rounds = 1;
  GrowthRule growth = GrowthRule::kScored;
  double init_scale = 0.02;
  uint64_t seed = 0;

  int modules() const { return static_cast<int>(true_ranks.size()); }
};

void validate(const DiscoveryConfig& cfg);

struct ImportanceScore {
  double value = 0.0;
  // Set when theta was (numerically) zero and the score defaulted to 0.
  bool zero_theta = false;
};

// (1 / sqrt(||theta||)) * sum_p |p| |grad_p|.
ImportanceScore raw_importance(const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& grads);

struct EmaState {
  double S_bar = 0.0;
  double U = 0.0;
};

EmaState update_ema(double S_bar, double U, double S, double beta1,
                    double beta2, bool pre_update_volatility = false);

// Promotes reserves of the top_h eligible modules by S_bar * U (ties go to
// the lower id) without exceeding the budget. Promoted modules get a fresh
// reserve drawn from `rng`.
std::vector<int> grow_step(std::vector<ModuleState>& states,
                           const DiscoveryConfig& cfg, Rng& rng);

// Ablation: ignores scores and promotes eligible modules in cyclic id order
// starting after `cursor`, which is advanced.
std::vector<int> uniform_grow_step(std::vector<ModuleState>& states,
                                   const DiscoveryConfig& cfg, int& cursor,
                                   Rng& rng);

// lambda (||A^T A - I||_F + ||B B^T - I||_F) / (2 n_layers), with A the d x r
// stack of a_k columns and B the r x m stack of b_k rows.
double orth_penalty(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                    double lambda, int n_layers);

struct DiscoveryResult {
  // ranks[l][i]: committed rank of module i at the end of round l.
  std::vector<std::vector<int>> ranks;
  std::vector<int> final_ranks;
  // Relative weight error of each module at the end of every round.
  std::vector<std::vector<double>> module_errors;
  // sqrt(sum_i ||W*_i - W_i||^2) / sqrt(sum_i ||W*_i||^2) per round.
  std::vector<double> total_error;
  std::vector<double> orth_penalty;
  std::vector<std::vector<int>> promotions;
  // Per round and module: mean raw importance and the S_bar * U score.
  std::vector<std::vector<double>> raw_importance;
  std::vector<std::vector<double>> scores;
  // Per-module run in the deflation layout (slot k activates when it is
  // committed), usable with decompose_errors.
  std::vector<DeflationRun> runs;
  std::vector<ProblemInstance> instances;
  std::vector<EmaState> final_scores;
};

DiscoveryResult adapad_train(const DiscoveryConfig& cfg);

// Round body exposed for the order-independence property: updates every
// committed component and reserve of `state` on the given batches using
// only the round-start snapshot, visiting components in `order` (a
// permutation of 1..r+1, with r+1 the reserve). Returns the mean raw
// importance over the batches.
double train_module_round(ModuleState& state,
                          const std::vector<std::vector<int>>& batches,
                          const Rank1Config& rank1,
                          const std::vector<int>& order);

}  // namespace deflate

#endif  // DEFLATE_DISCOVERY_H_
