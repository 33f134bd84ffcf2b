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

#ifndef DEFLATE_CORE_MODEL_H_
#define DEFLATE_CORE_MODEL_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace deflate {

struct SpectralProfile {
  enum class Kind { kExponential, kPowerLaw, kUniform, kLinearGap };

  Kind kind = Kind::kExponential;
  double exponent = 1.5;  // PowerLaw
  double step = 0.1;      // LinearGap g
  double floor = 0.01;    // LinearGap clamp

  static SpectralProfile Exponential();
  static SpectralProfile PowerLaw(double exponent = 1.5);
  static SpectralProfile Uniform();
  static SpectralProfile LinearGap(double step, double floor = 0.01);

  // Short name used in configs and trace files: exp, power, uniform, lingap.
  std::string Name() const;
  // Name plus parameters where relevant, e.g. "lingap:g=0.05".
  std::string Label() const;
};

// Parses exp | power | uniform | lingap. Parameters keep their defaults.
SpectralProfile ParseProfile(const std::string& name);

struct SvdTriplet {
  double sigma = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};

struct ProblemInstance {
  int m = 0;
  int d = 0;
  int n = 0;
  int r_star = 0;
  SpectralProfile profile;
  double noise_level = 0.0;
  uint64_t seed = 0;
  bool whiten_x = false;

  Eigen::MatrixXd W_star;   // m x d
  Eigen::MatrixXd X;        // d x n
  Eigen::MatrixXd Y_clean;  // W_star * X
  Eigen::MatrixXd Y;        // Y_clean + E

  // Top r_star singular values of Y_clean divided by sigma_scale, so
  // sigma_Y[0] == 1. Theory quantities are evaluated in these units.
  std::vector<double> sigma_Y;
  double sigma_scale = 1.0;
  // Top r_star singular values of the noisy Y, in the same units.
  std::vector<double> sigma_Y_noisy;
  std::vector<double> gaps;
  bool gap_degenerate = false;

  double sigma_min_x = 0.0;
  double sigma_max_x = 0.0;
};

std::vector<double> make_spectral_profile(const SpectralProfile& profile,
                                          int r_star);

// Draws, in order and row-major from a single stream: the m x r* and d x r*
// Gaussians whose QR factors give U and V, then X, then E (only when
// noise_level > 0).
ProblemInstance generate_instance(int m, int d, int n, int r_star,
                                  const SpectralProfile& profile,
                                  double noise_level, uint64_t seed,
                                  bool whiten_x = false);

struct GapReport {
  std::vector<double> gaps;
  // True when some gap is below 1e-8 relative to sigma[0].
  bool degenerate = false;
};

// T_k = min(min_{j>k} |sigma_k - sigma_j|, sigma_k).
GapReport spectral_gaps(const std::vector<double>& sigma);

double tail_sum(const std::vector<double>& sigma, int r);

// Leading k singular triplets in nonincreasing order. Each u is signed so
// that its first entry with magnitude above 1e-12 is positive.
std::vector<SvdTriplet> top_svd(const Eigen::MatrixXd& M, int k);

Eigen::VectorXd singular_values(const Eigen::MatrixXd& M);
double spectral_norm(const Eigen::MatrixXd& M);

}  // namespace deflate

#endif  // DEFLATE_CORE_MODEL_H_
