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

#ifndef DEFLATE_RANK1_H_
#define DEFLATE_RANK1_H_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "deflate/core_model.h"
#include "deflate/errors.h"

namespace deflate {

// One rank-1 factor pair. Only the product b a^T is meaningful.
struct ComponentPair {
  Eigen::VectorXd a;  // length d
  Eigen::VectorXd b;  // length m
};

struct Rank1Config {
  enum class Method { kAls, kGd };

  Method method = Method::kAls;
  int inner_iters = 10;
  // GD steps; nonpositive values select the default rule.
  double eta_a = 0.0;
  double eta_b = 0.0;
};

// Caches M = X X^T, its Cholesky factor and extreme spectral data of X.
class GramSystem {
 public:
  // Throws kDegenerateInput when sigma_min(X) < 1e-10.
  explicit GramSystem(const Eigen::MatrixXd& X);

  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& M() const { return M_; }
  Eigen::VectorXd Solve(const Eigen::VectorXd& rhs) const;
  double lambda_max() const { return lambda_max_; }
  double sigma_min_x() const { return sigma_min_x_; }

 private:
  Eigen::MatrixXd X_;
  Eigen::MatrixXd M_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double lambda_max_ = 0.0;
  double sigma_min_x_ = 0.0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, ComponentPair iterate, int step)
      : Error(ErrorKind::kDivergence, what),
        iterate_(std::move(iterate)),
        step_(step) {}

  const ComponentPair& iterate() const { return iterate_; }
  int step() const { return step_; }

 private:
  ComponentPair iterate_;
  int step_;
};

// The subroutines below see the target Y_k only through N = Y_k X^T and
// ||Y_k||_F^2, which lets callers form deflated targets without building
// m x n matrices.

// 0.5 * ||Y_k - b a^T X||_F^2.
double bilinear_objective(const GramSystem& gram, const Eigen::MatrixXd& N,
                          double target_sq_norm, const ComponentPair& pair);

struct Rank1Gradient {
  Eigen::VectorXd grad_a;
  Eigen::VectorXd grad_b;
};

Rank1Gradient bilinear_gradient(const GramSystem& gram,
                                const Eigen::MatrixXd& N,
                                const ComponentPair& pair);

// ||b a^T X||_F = ||b|| * sqrt(a^T M a).
double product_norm(const GramSystem& gram, const ComponentPair& pair);

ComponentPair als_sweeps(const GramSystem& gram, const Eigen::MatrixXd& N,
                         int sweeps, ComponentPair warm);

struct GdSteps {
  double eta_a;
  double eta_b;
};

// 0.5 / (lambda_max(M) * max(||b||^2, 1)) for a, and the mirrored rule with
// ||a||^2 for b, evaluated at the warm start.
GdSteps default_gd_steps(const GramSystem& gram, const ComponentPair& warm);

ComponentPair gd_steps(const GramSystem& gram, const Eigen::MatrixXd& N,
                       double target_sq_norm, int steps, ComponentPair warm,
                       GdSteps eta);

// Dispatches on cfg.method.
ComponentPair run_rank1(const GramSystem& gram, const Eigen::MatrixXd& N,
                        double target_sq_norm, const Rank1Config& cfg,
                        ComponentPair warm);

ComponentPair rank1_als(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X,
                        int T, const ComponentPair& warm);
ComponentPair rank1_gd(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X,
                       int T, const ComponentPair& warm, double eta_a,
                       double eta_b);

struct ContractionEstimate {
  double value = 0.0;
  // Set when the raw median was >= 1 (or 0) and had to be clipped.
  bool clipped = false;
  int trials_used = 0;
  std::vector<double> ratios;
};

// Median one-call contraction of the product error around the clean k-th
// component (k is 1-based), from warm starts at product distance
// 0.1 * sigma*_k (raw units). Trials whose initial distance vanishes are
// dropped. The result lies in [1e-12, 1 - 1e-9].
ContractionEstimate estimate_contraction(const ProblemInstance& instance,
                                         int k, const Rank1Config& cfg,
                                         int trials, uint64_t seed = 0);

}  // namespace deflate

#endif  // DEFLATE_RANK1_H_
