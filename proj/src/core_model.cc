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

#include "deflate/core_model.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deflate/errors.h"
#include "deflate/random.h"

namespace deflate {
namespace {

// Thin Q factor with columns signed so that diag(R) is positive.
Eigen::MatrixXd OrthonormalColumns(const Eigen::MatrixXd& G) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q =
      qr.householderQ() * Eigen::MatrixXd::Identity(G.rows(), G.cols());
  const Eigen::MatrixXd& R = qr.matrixQR();
  for (int j = 0; j < G.cols(); ++j) {
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  }
  return Q;
}

void CheckFinite(const Eigen::MatrixXd& M) {
  if (!M.allFinite()) {
    throw Error(ErrorKind::kNumeric, "matrix has non-finite entries");
  }
}

}  // namespace

SpectralProfile SpectralProfile::Exponential() { return SpectralProfile{}; }

SpectralProfile SpectralProfile::PowerLaw(double exponent) {
  SpectralProfile p;
  p.kind = Kind::kPowerLaw;
  p.exponent = exponent;
  return p;
}

SpectralProfile SpectralProfile::Uniform() {
  SpectralProfile p;
  p.kind = Kind::kUniform;
  return p;
}

SpectralProfile SpectralProfile::LinearGap(double step, double floor) {
  SpectralProfile p;
  p.kind = Kind::kLinearGap;
  p.step = step;
  p.floor = floor;
  return p;
}

std::string SpectralProfile::Name() const {
  switch (kind) {
    case Kind::kExponential:
      return "exp";
    case Kind::kPowerLaw:
      return "power";
    case Kind::kUniform:
      return "uniform";
    case Kind::kLinearGap:
      return "lingap";
  }
  return "exp";
}

std::string SpectralProfile::Label() const {
  std::ostringstream out;
  out << Name();
  if (kind == Kind::kLinearGap) out << ":g=" << step;
  return out.str();
}

SpectralProfile ParseProfile(const std::string& name) {
  if (name == "exp") return SpectralProfile::Exponential();
  if (name == "power") return SpectralProfile::PowerLaw();
  if (name == "uniform") return SpectralProfile::Uniform();
  if (name == "lingap") return SpectralProfile::LinearGap(0.1);
  throw Error(ErrorKind::kParameter, "unknown profile '" + name + "'");
}

std::vector<double> make_spectral_profile(const SpectralProfile& profile,
                                          int r_star) {
  if (r_star < 1) throw Error(ErrorKind::kParameter, "r_star must be >= 1");
  std::vector<double> sigma(r_star);
  switch (profile.kind) {
    case SpectralProfile::Kind::kExponential:
      for (int k = 0; k < r_star; ++k) sigma[k] = std::ldexp(1.0, -k);
      break;
    case SpectralProfile::Kind::kPowerLaw:
      if (!(profile.exponent > 0)) {
        throw Error(ErrorKind::kParameter, "power-law exponent must be > 0");
      }
      for (int k = 0; k < r_star; ++k) {
        sigma[k] = std::pow(static_cast<double>(k + 1), -profile.exponent);
      }
      break;
    case SpectralProfile::Kind::kUniform:
      std::fill(sigma.begin(), sigma.end(), 1.0);
      break;
    case SpectralProfile::Kind::kLinearGap:
      if (!(profile.step > 0 && profile.step < 1)) {
        throw Error(ErrorKind::kParameter, "linear-gap step must lie in (0,1)");
      }
      if (!(profile.floor > 0 && profile.floor <= 1)) {
        throw Error(ErrorKind::kParameter, "linear-gap floor must lie in (0,1]");
      }
      for (int k = 0; k < r_star; ++k) {
        sigma[k] = std::max(1.0 - k * profile.step, profile.floor);
      }
      break;
  }
  return sigma;
}

ProblemInstance generate_instance(int m, int d, int n, int r_star,
                                  const SpectralProfile& profile,
                                  double noise_level, uint64_t seed,
                                  bool whiten_x) {
  if (m < 1 || d < 1 || n < 1 || r_star < 1) {
    throw Error(ErrorKind::kDimension, "dimensions must be positive");
  }
  if (r_star > std::min(m, d)) {
    throw Error(ErrorKind::kDimension, "r_star exceeds min(m, d)");
  }
  if (whiten_x && d > n) {
    throw Error(ErrorKind::kDimension, "whiten_x requires d <= n");
  }
  if (!(noise_level >= 0) || !std::isfinite(noise_level)) {
    throw Error(ErrorKind::kParameter, "noise level must be finite and >= 0");
  }
  const std::vector<double> sigma = make_spectral_profile(profile, r_star);

  ProblemInstance inst;
  inst.m = m;
  inst.d = d;
  inst.n = n;
  inst.r_star = r_star;
  inst.profile = profile;
  inst.noise_level = noise_level;
  inst.seed = seed;
  inst.whiten_x = whiten_x;

  Rng rng(seed);
  const Eigen::MatrixXd U = OrthonormalColumns(rng.GaussianMatrix(m, r_star));
  const Eigen::MatrixXd V = OrthonormalColumns(rng.GaussianMatrix(d, r_star));
  const Eigen::VectorXd s =
      Eigen::Map<const Eigen::VectorXd>(sigma.data(), r_star);
  inst.W_star = U * s.asDiagonal() * V.transpose();

  inst.X = rng.GaussianMatrix(d, n);
  if (whiten_x) {
    const Eigen::MatrixXd Q = OrthonormalColumns(inst.X.transpose());
    inst.X = std::sqrt(static_cast<double>(n)) * Q.transpose();
  }
  const Eigen::VectorXd sx = singular_values(inst.X);
  inst.sigma_max_x = sx(0);
  inst.sigma_min_x = d <= n ? sx(d - 1) : 0.0;
  if (inst.sigma_min_x < 1e-10) {
    throw Error(ErrorKind::kDegenerateInput, "X is rank deficient");
  }

  inst.Y_clean = inst.W_star * inst.X;
  inst.Y = inst.Y_clean;
  if (noise_level > 0) inst.Y += rng.GaussianMatrix(m, n, noise_level);

  const Eigen::VectorXd sy = singular_values(inst.Y_clean);
  inst.sigma_scale = sy(0);
  inst.sigma_Y.resize(r_star);
  for (int k = 0; k < r_star; ++k) inst.sigma_Y[k] = sy(k) / sy(0);
  inst.sigma_Y[0] = 1.0;
  const Eigen::VectorXd sn = singular_values(inst.Y);
  inst.sigma_Y_noisy.resize(r_star);
  for (int k = 0; k < r_star; ++k) inst.sigma_Y_noisy[k] = sn(k) / sy(0);

  const GapReport gaps = spectral_gaps(inst.sigma_Y);
  inst.gaps = gaps.gaps;
  inst.gap_degenerate =
      gaps.degenerate || profile.kind == SpectralProfile::Kind::kUniform;
  return inst;
}

GapReport spectral_gaps(const std::vector<double>& sigma) {
  GapReport out;
  const size_t r = sigma.size();
  out.gaps.resize(r);
  for (size_t k = 0; k < r; ++k) {
    if (!(sigma[k] > 0)) {
      throw Error(ErrorKind::kParameter, "singular values must be positive");
    }
    double gap = sigma[k];
    for (size_t j = k + 1; j < r; ++j) {
      gap = std::min(gap, std::abs(sigma[k] - sigma[j]));
    }
    out.gaps[k] = gap;
    if (gap < 1e-8 * sigma[0]) out.degenerate = true;
  }
  return out;
}

double tail_sum(const std::vector<double>& sigma, int r) {
  double total = 0.0;
  for (size_t k = std::max(r, 0); k < sigma.size(); ++k) total += sigma[k];
  return total;
}

std::vector<SvdTriplet> top_svd(const Eigen::MatrixXd& M, int k) {
  CheckFinite(M);
  const int p = static_cast<int>(std::min(M.rows(), M.cols()));
  if (k < 0 || k > p) {
    throw Error(ErrorKind::kDimension, "top_svd: k exceeds min(rows, cols)");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(M,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  std::vector<SvdTriplet> out(k);
  for (int i = 0; i < k; ++i) {
    SvdTriplet& t = out[i];
    t.sigma = svd.singularValues()(i);
    t.u = svd.matrixU().col(i);
    t.v = svd.matrixV().col(i);
    const double cutoff = 1e-12 * t.u.cwiseAbs().maxCoeff();
    for (int j = 0; j < t.u.size(); ++j) {
      if (std::abs(t.u(j)) > cutoff) {
        if (t.u(j) < 0) {
          t.u = -t.u;
          t.v = -t.v;
        }
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& M) {
  CheckFinite(M);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues();
}

double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  return singular_values(M)(0);
}

}  // namespace deflate
