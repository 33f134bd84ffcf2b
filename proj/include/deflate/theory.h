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

#ifndef DEFLATE_THEORY_H_
#define DEFLATE_THEORY_H_

#include <string>
#include <vector>

#include "deflate/core_model.h"
#include "deflate/deflation.h"
#include "deflate/metrics.h"

namespace deflate {

// Solves y e^y = x on the branch y <= -1 by bisection on [-50, -1].
double lambert_w_neg1(double x);

// max{1, -W_{-1}(-a)}. Arguments a >= 1/e return 1 and set *clamped.
double w_hat(double a, bool* clamped = nullptr);

// m_1 = F_1, m_k = max{F_k, 1/k + (k-1) m_{k-1} / k}.
std::vector<double> effective_rates(const std::vector<double>& F);

// All quantities are in normalized units (sigma_1 = 1), so Q here is the
// ceiling divided by the instance scale.
struct RatePlan {
  std::vector<double> F;
  std::vector<double> m;
  std::vector<double> R;
  std::vector<double> C;
  std::vector<double> gamma;
  std::vector<double> sigma;
  std::vector<double> gaps;
  double Q = 0.0;
  std::vector<int> s_exact;
  std::vector<int> s_simplified;
  std::vector<std::string> warnings;

  int r() const { return static_cast<int>(F.size()); }
};

RatePlan rate_plan(const std::vector<double>& sigma,
                   const std::vector<double>& F, double Q);
RatePlan rate_plan(const ProblemInstance& instance,
                   const std::vector<double>& F, double Q);

enum class ScheduleForm {
  kExact,        // per-predecessor rates
  kExactGlobal,  // every predecessor uses m_k
  kSimplified,
};

struct SimplifiedConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
};

struct WarmupSchedule {
  std::vector<int> s;
  // Rounds from which the gap condition holds (exact forms only).
  std::vector<int> s_hat;
  bool clamped = false;
};

WarmupSchedule warmup_schedule(const RatePlan& plan, ScheduleForm form,
                               const SimplifiedConstants& constants = {});

// 3 R_k (l - s_k + 2) m_k^(l - s_k + 1); k is 1-based, l >= s_k - 1.
double convergence_envelope(const RatePlan& plan, int k, int s_k, int l);

// 3 sum_{k'<k} R_k' (l - s_k' + 1) m_k'^(l - s_k').
double self_correction_envelope(const RatePlan& plan,
                                const std::vector<int>& s, int k, int l);

struct SurrogatePlan {
  // B_hat[k-1][l], G_hat[k-1][l] for l = 0..rounds.
  std::vector<std::vector<double>> B_hat;
  std::vector<std::vector<double>> G_hat;
  std::vector<double> boundary_B;  // B_hat_{k, s_hat_k} before the ceiling
  std::vector<double> boundary_G;  // G_hat_{k, s_k - 1}
  std::vector<int> s_hat;
  // Set when some boundary_G exceeds 3 R_k (D at s_k - 1 above R_k).
  bool boundary_exceeds_ceiling = false;
};

// D_boundary[k-1] = D_{k, s_k - 1} in normalized units.
SurrogatePlan surrogate_sequences(const RatePlan& plan,
                                  const std::vector<int>& s,
                                  const std::vector<int>& s_hat,
                                  const std::vector<double>& D_boundary,
                                  int rounds);

struct DecayFitOptions {
  int window = 5;
  // Values at or below this level count as converged: they never break
  // monotone decay and are excluded from the regression.
  double floor = 0.0;
};

struct DecayFit {
  double m_hat = 0.0;
  int s_hat = 0;
  double C_hat = 0.0;
  double residual = 0.0;  // RMS in log space
  int points = 0;
};

// First round from activation - 1 on after which G decays over `window`
// consecutive rounds. Throws kNoFit when there is none.
int detect_decay_start(const std::vector<double>& G, int activation,
                       const DecayFitOptions& options = {});
int detect_decay_start(const DeflationTrace& trace, int k,
                       const DecayFitOptions& options = {});

// G[l] for l = 0..L; `activation` is the round the worker starts updating.
// Regresses log G on rounds where G is below half its activation value and
// above the floor; needs two such rounds.
DecayFit fit_decay(const std::vector<double>& G, int activation,
                   const DecayFitOptions& options = {});
DecayFit fit_decay(const DeflationTrace& trace, int k,
                   const DecayFitOptions& options = {});

double noise_floor(double eps, int r_star, int d, int n);

// (tail + sum_k G_{k,L}) / sigma_min(X), raw units.
double noiseless_bound(const ProblemInstance& instance,
                       const DeflationRun& run);

}  // namespace deflate

#endif  // DEFLATE_THEORY_H_
