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

#include "deflate/rank1.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "deflate/deflation.h"
#include "deflate/random.h"

namespace deflate {
namespace {

constexpr double kMinCurvature = 1e-14;

double ProductDistance(const ComponentPair& pair, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& target) {
  const Eigen::VectorXd c = X.transpose() * pair.a;
  return (pair.b * c.transpose() - target).norm();
}

double Median(std::vector<double> values) {
  const size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

GramSystem::GramSystem(const Eigen::MatrixXd& X) : X_(X) {
  if (!X.allFinite()) {
    throw Error(ErrorKind::kNumeric, "X has non-finite entries");
  }
  const Eigen::VectorXd sx = singular_values(X);
  sigma_min_x_ = X.rows() <= X.cols() ? sx(X.rows() - 1) : 0.0;
  if (sigma_min_x_ < 1e-10) {
    throw Error(ErrorKind::kDegenerateInput, "M = X X^T is singular");
  }
  lambda_max_ = sx(0) * sx(0);
  M_ = X * X.transpose();
  llt_.compute(M_);
  if (llt_.info() != Eigen::Success) {
    throw Error(ErrorKind::kDegenerateInput, "Cholesky of X X^T failed");
  }
}

Eigen::VectorXd GramSystem::Solve(const Eigen::VectorXd& rhs) const {
  return llt_.solve(rhs);
}

double bilinear_objective(const GramSystem& gram, const Eigen::MatrixXd& N,
                          double target_sq_norm, const ComponentPair& pair) {
  const double cross = pair.b.dot(N * pair.a);
  const double curvature = pair.a.dot(gram.M() * pair.a);
  return 0.5 * (target_sq_norm - 2.0 * cross +
                pair.b.squaredNorm() * curvature);
}

Rank1Gradient bilinear_gradient(const GramSystem& gram,
                                const Eigen::MatrixXd& N,
                                const ComponentPair& pair) {
  const Eigen::VectorXd Ma = gram.M() * pair.a;
  Rank1Gradient g;
  g.grad_a = Ma * pair.b.squaredNorm() - N.transpose() * pair.b;
  g.grad_b = pair.b * pair.a.dot(Ma) - N * pair.a;
  return g;
}

double product_norm(const GramSystem& gram, const ComponentPair& pair) {
  const double curvature = std::max(0.0, pair.a.dot(gram.M() * pair.a));
  return pair.b.norm() * std::sqrt(curvature);
}

ComponentPair als_sweeps(const GramSystem& gram, const Eigen::MatrixXd& N,
                         int sweeps, ComponentPair warm) {
  if (sweeps < 1) throw Error(ErrorKind::kParameter, "ALS needs T >= 1");
  ComponentPair p = std::move(warm);
  for (int t = 0; t < sweeps; ++t) {
    const double curvature = p.a.dot(gram.M() * p.a);
    if (!(curvature >= kMinCurvature)) {
      throw Error(ErrorKind::kWarmStart,
                  "a^T M a = " + std::to_string(curvature) + " below 1e-14");
    }
    p.b = N * p.a / curvature;
    const double bb = p.b.squaredNorm();
    // A zero target leaves b = 0, which is already its exact fit.
    if (bb == 0.0) break;
    p.a = gram.Solve(N.transpose() * p.b) / bb;
  }
  if (!p.a.allFinite() || !p.b.allFinite()) {
    throw Error(ErrorKind::kNumeric, "ALS produced non-finite factors");
  }
  return p;
}

GdSteps default_gd_steps(const GramSystem& gram, const ComponentPair& warm) {
  const double lam = gram.lambda_max();
  return {0.5 / (lam * std::max(warm.b.squaredNorm(), 1.0)),
          0.5 / (lam * std::max(warm.a.squaredNorm(), 1.0))};
}

ComponentPair gd_steps(const GramSystem& gram, const Eigen::MatrixXd& N,
                       double target_sq_norm, int steps, ComponentPair warm,
                       GdSteps eta) {
  if (steps < 1) throw Error(ErrorKind::kParameter, "GD needs T >= 1");
  if (!(eta.eta_a > 0) || !(eta.eta_b > 0)) {
    throw Error(ErrorKind::kParameter, "GD step sizes must be positive");
  }
  ComponentPair p = std::move(warm);
  const double start = bilinear_objective(gram, N, target_sq_norm, p);
  // The absolute slack keeps round-off from tripping the test when the warm
  // start already fits the target exactly.
  const double limit = 10.0 * start + 1e-12 * target_sq_norm;
  for (int t = 0; t < steps; ++t) {
    const Rank1Gradient g = bilinear_gradient(gram, N, p);
    p.a -= eta.eta_a * g.grad_a;
    p.b -= eta.eta_b * g.grad_b;
    const double obj = bilinear_objective(gram, N, target_sq_norm, p);
    if (!std::isfinite(obj) || obj > limit || !p.a.allFinite() ||
        !p.b.allFinite()) {
      throw DivergenceError("objective grew more than 10x over the warm start "
                            "at step " + std::to_string(t + 1),
                            p, t + 1);
    }
  }
  return p;
}

ComponentPair run_rank1(const GramSystem& gram, const Eigen::MatrixXd& N,
                        double target_sq_norm, const Rank1Config& cfg,
                        ComponentPair warm) {
  if (cfg.method == Rank1Config::Method::kAls) {
    return als_sweeps(gram, N, cfg.inner_iters, std::move(warm));
  }
  GdSteps eta = default_gd_steps(gram, warm);
  if (cfg.eta_a > 0) eta.eta_a = cfg.eta_a;
  if (cfg.eta_b > 0) eta.eta_b = cfg.eta_b;
  return gd_steps(gram, N, target_sq_norm, cfg.inner_iters, std::move(warm),
                  eta);
}

ComponentPair rank1_als(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X,
                        int T, const ComponentPair& warm) {
  const GramSystem gram(X);
  return als_sweeps(gram, Y_k * X.transpose(), T, warm);
}

ComponentPair rank1_gd(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X,
                       int T, const ComponentPair& warm, double eta_a,
                       double eta_b) {
  const GramSystem gram(X);
  return gd_steps(gram, Y_k * X.transpose(), Y_k.squaredNorm(), T, warm,
                  {eta_a, eta_b});
}

ContractionEstimate estimate_contraction(const ProblemInstance& instance,
                                         int k, const Rank1Config& cfg,
                                         int trials, uint64_t seed) {
  if (k < 1 || k > instance.r_star) {
    throw Error(ErrorKind::kParameter, "component index out of range");
  }
  if (trials < 1) throw Error(ErrorKind::kParameter, "trials must be >= 1");
  if (instance.gap_degenerate) {
    throw Error(ErrorKind::kDegenerateGap,
                "contraction probe needs distinct singular values");
  }
  const ExactTargets exact = exact_sequential_targets(instance.Y_clean, k);
  const Eigen::MatrixXd& target = exact.targets[k - 1];
  const SvdTriplet& star = exact.components[k - 1];
  const Eigen::MatrixXd fit = exact.product(k);

  const GramSystem gram(instance.X);
  const Eigen::MatrixXd& X = instance.X;
  const Eigen::MatrixXd N = target * X.transpose();
  const double target_sq = target.squaredNorm();
  ComponentPair fixed;
  fixed.b = star.u;
  fixed.a = gram.Solve(X * (star.sigma * star.v));

  // Warm starts stay on the iterate manifold: b in the target's column
  // space and a^T X in its row space.
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(
      target, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  int rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-10 * sv(0)) ++rank;
  const Eigen::MatrixXd U = svd.matrixU().leftCols(rank);
  const Eigen::MatrixXd XV = X * svd.matrixV().leftCols(rank);

  const double radius = 0.1 * star.sigma;
  Rng rng = Rng(seed, 0x636f6e74ULL).Split(k);
  ContractionEstimate out;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::VectorXd xa = gram.Solve(XV * rng.GaussianVector(rank));
    Eigen::VectorXd xb = U * rng.GaussianVector(rank);
    xa *= fixed.a.norm() / xa.norm();
    xb *= fixed.b.norm() / xb.norm();
    auto perturbed = [&](double t) {
      return ComponentPair{fixed.a + t * xa, fixed.b + t * xb};
    };
    // Bracket then bisect for the step reaching the probe radius.
    double lo = 0.0;
    double hi = 0.05;
    for (int i = 0; i < 60 && ProductDistance(perturbed(hi), X, fit) < radius;
         ++i) {
      lo = hi;
      hi *= 2.0;
    }
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      (ProductDistance(perturbed(mid), X, fit) < radius ? lo : hi) = mid;
    }
    const ComponentPair warm = perturbed(hi);
    const double before = ProductDistance(warm, X, fit);
    if (!(before > 1e-14 * star.sigma)) continue;
    double ratio;
    try {
      const ComponentPair after = run_rank1(gram, N, target_sq, cfg, warm);
      ratio = ProductDistance(after, X, fit) / before;
    } catch (const DivergenceError&) {
      ratio = std::numeric_limits<double>::infinity();
    }
    out.ratios.push_back(ratio);
  }
  out.trials_used = static_cast<int>(out.ratios.size());
  if (out.ratios.empty()) {
    throw Error(ErrorKind::kNumeric, "every contraction trial was degenerate");
  }
  double value = Median(out.ratios);
  if (value >= 1.0) {
    value = 1.0 - 1e-9;
    out.clipped = true;
  } else if (value < 1e-12) {
    value = 1e-12;
    out.clipped = true;
  }
  out.value = value;
  return out;
}

}  // namespace deflate
