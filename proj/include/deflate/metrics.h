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

#ifndef DEFLATE_METRICS_H_
#define DEFLATE_METRICS_H_

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "deflate/core_model.h"
#include "deflate/deflation.h"
#include "deflate/rank1.h"

namespace deflate {

struct IdealFit {
  SvdTriplet triplet;
  Eigen::MatrixXd product;  // sigma u v^T
  ComponentPair pair;       // b = u, a = M^{-1} X (sigma v)
};

// Throws kNonUniqueFit when the top two singular values of Y_k agree to
// 1e-8 relative.
IdealFit ideal_rank1_fit(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X);
IdealFit ideal_rank1_fit(const Eigen::MatrixXd& Y_k, const GramSystem& gram);

// Full (k, round) grid for rounds 0..L, stored column-wise. Values are in
// the raw units of the instance; divide by `scale` for normalized units.
struct DeflationTrace {
  int r = 0;
  int rounds = 0;
  std::vector<int> activation;
  double scale = 1.0;
  // False when the clean spectrum is degenerate; B is then NaN.
  bool b_defined = true;
  // False when metric columns were not computed (weight errors only).
  bool has_metrics = false;

  std::vector<double> D;
  std::vector<double> B;
  std::vector<double> G;
  std::vector<double> mismatch;           // ||Y_{k,l} - Y*_k||_F
  std::vector<double> mismatch_spectral;  // ||Y_{k,l} - Y*_k||_2
  std::vector<char> fit_unique;

  // Per round 0..L.
  std::vector<double> rel_weight_error;
  std::vector<double> abs_weight_error;
  // ||Y*_k||_F and sigma*_k (raw), k = 1..r.
  std::vector<double> clean_target_norm;
  std::vector<double> clean_sigma;

  size_t index(int k, int round) const {
    return static_cast<size_t>(round) * r + (k - 1);
  }
};

struct DecomposeOptions {
  bool spectral_mismatch = false;
};

// Y_{k,l} = Y - sum_{k'<k} b_{k',l-1} a_{k',l-1}^T X for l >= 1; round 0 uses
// the round-0 values.
Eigen::MatrixXd deflation_target(const DeflationRun& run,
                                 const ProblemInstance& instance, int k,
                                 int round);

DeflationTrace decompose_errors(const DeflationRun& run,
                                const ProblemInstance& instance,
                                const DecomposeOptions& options = {});

// Only the per-round weight-error columns.
DeflationTrace weight_errors(const DeflationRun& run,
                             const ProblemInstance& instance);

struct NashResiduals {
  std::vector<double> residual;
  std::vector<char> flagged;  // nonunique best response
};

// Best-response gap of each component given the predecessors' values at the
// same round.
NashResiduals nash_residual(const DeflationRun& run,
                            const ProblemInstance& instance, int round);

}  // namespace deflate

#endif  // DEFLATE_METRICS_H_
