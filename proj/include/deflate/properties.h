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

#ifndef DEFLATE_PROPERTIES_H_
#define DEFLATE_PROPERTIES_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deflate/experiments.h"
#include "deflate/metrics.h"
#include "deflate/theory.h"

namespace deflate {

// max_i |sigma_i(M + Delta) - sigma_i(M)| - ||Delta||_2. Nonpositive when
// Weyl's inequality holds.
double weyl_excess(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Delta);

struct WedinCheck {
  // Hypothesis: M has a positive top gap and ||Delta||_2 < gap / 2.
  bool applicable = false;
  double lhs = 0.0;  // sin^2 angle(u1, u1~) + sin^2 angle(v1, v1~)
  double rhs = 0.0;  // (||Delta^T u1||^2 + ||Delta v1||^2) / delta^2
  double delta = 0.0;
};

// delta = min{min_{j>=2} |sigma_1(M) - sigma_j(M + Delta)|, sigma_1(M)}.
WedinCheck wedin_check(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Delta);

struct RowCheck {
  int checked = 0;
  int violations = 0;
  double worst = 0.0;  // largest lhs - rhs over checked rows
};

// G <= D + B + slack on every row, normalized units.
RowCheck check_triangle(const DeflationTrace& trace, double slack = 1e-9);

// mismatch(k, l) <= sum_{k'<k} G(k', l - 1) + slack for l >= 1.
RowCheck check_mismatch_bound(const DeflationTrace& trace, double slack = 1e-9);

// B(k, l) <= C_k mismatch(k, l) + slack on rows whose spectral mismatch is
// below half the k-th clean gap. Needs a trace with spectral mismatch.
RowCheck check_b_bound(const DeflationTrace& trace, const ProblemInstance& instance,
                       const RatePlan& plan, double slack = 1e-9);

struct PropertySuiteResult {
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  std::vector<TraceRow> rows;
};

// Runs every invariant check. config supplies the desk instance (dims,
// profile, L, Q) and the seed of the random samples.
PropertySuiteResult run_property_suite(const RunConfig& config);

}  // namespace deflate

#endif  // DEFLATE_PROPERTIES_H_
