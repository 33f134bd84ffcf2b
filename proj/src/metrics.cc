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

#include "deflate/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deflate/errors.h"

namespace deflate {
namespace {

constexpr double kTieTolerance = 1e-8;

Eigen::MatrixXd ProductOf(const ComponentPair& p, const Eigen::MatrixXd& X) {
  return p.b * (X.transpose() * p.a).transpose();
}

// Top triplet plus whether it is separated from the second one.
struct TopTriplet {
  SvdTriplet triplet;
  bool unique = true;
};

TopTriplet Top(const Eigen::MatrixXd& Y) {
  const int p = static_cast<int>(std::min(Y.rows(), Y.cols()));
  const std::vector<SvdTriplet> t = top_svd(Y, std::min(2, p));
  TopTriplet out;
  out.triplet = t[0];
  const double second = t.size() > 1 ? t[1].sigma : 0.0;
  out.unique = t[0].sigma > 0 && t[0].sigma - second > kTieTolerance * t[0].sigma;
  return out;
}

// Starred components k = 1..r from the clean data. Components beyond the
// rank of Y_clean are zero.
struct Starred {
  std::vector<Eigen::MatrixXd> targets;   // Y*_k
  std::vector<Eigen::MatrixXd> products;  // sigma*_k u*_k v*_k^T
  std::vector<double> sigma;
  bool separated = true;
};

Starred StarredComponents(const ProblemInstance& instance, int r) {
  Starred out;
  const Eigen::MatrixXd& Y = instance.Y_clean;
  const int p = static_cast<int>(std::min(Y.rows(), Y.cols()));
  const std::vector<SvdTriplet> trip = top_svd(Y, std::min(r + 1, p));
  const double top = trip.empty() ? 0.0 : trip[0].sigma;
  Eigen::MatrixXd target = Y;
  for (int k = 0; k < r; ++k) {
    out.targets.push_back(target);
    if (k < static_cast<int>(trip.size()) && k < instance.r_star) {
      const SvdTriplet& t = trip[k];
      const double next =
          k + 1 < static_cast<int>(trip.size()) ? trip[k + 1].sigma : 0.0;
      if (!(t.sigma - next >= kTieTolerance * top)) out.separated = false;
      out.products.push_back(t.sigma * t.u * t.v.transpose());
      out.sigma.push_back(t.sigma);
    } else {
      out.products.push_back(Eigen::MatrixXd::Zero(Y.rows(), Y.cols()));
      out.sigma.push_back(0.0);
    }
    target -= out.products.back();
  }
  if (instance.gap_degenerate) out.separated = false;
  return out;
}

DeflationTrace EmptyTrace(const DeflationRun& run,
                          const ProblemInstance& instance) {
  DeflationTrace trace;
  trace.r = run.r;
  trace.rounds = run.rounds;
  trace.activation = run.activation;
  trace.scale = instance.sigma_scale;
  const double w_norm = instance.W_star.norm();
  for (int l = 0; l <= run.rounds; ++l) {
    const double err = (instance.W_star - reconstruct_weight(run, l)).norm();
    trace.abs_weight_error.push_back(err);
    trace.rel_weight_error.push_back(err / w_norm);
  }
  return trace;
}

}  // namespace

IdealFit ideal_rank1_fit(const Eigen::MatrixXd& Y_k, const GramSystem& gram) {
  const TopTriplet top = Top(Y_k);
  if (!top.unique) {
    throw Error(ErrorKind::kNonUniqueFit,
                "top singular value of the target is not simple");
  }
  IdealFit fit;
  fit.triplet = top.triplet;
  fit.product = top.triplet.sigma * top.triplet.u * top.triplet.v.transpose();
  fit.pair.b = top.triplet.u;
  fit.pair.a = gram.Solve(gram.X() * (top.triplet.sigma * top.triplet.v));
  return fit;
}

IdealFit ideal_rank1_fit(const Eigen::MatrixXd& Y_k, const Eigen::MatrixXd& X) {
  return ideal_rank1_fit(Y_k, GramSystem(X));
}

Eigen::MatrixXd deflation_target(const DeflationRun& run,
                                 const ProblemInstance& instance, int k,
                                 int round) {
  const int source = std::max(round - 1, 0);
  Eigen::MatrixXd Y = instance.Y;
  for (int j = 1; j < k; ++j) {
    Y.noalias() -= ProductOf(run.pair(j, source), instance.X);
  }
  return Y;
}

DeflationTrace weight_errors(const DeflationRun& run,
                             const ProblemInstance& instance) {
  return EmptyTrace(run, instance);
}

DeflationTrace decompose_errors(const DeflationRun& run,
                                const ProblemInstance& instance,
                                const DecomposeOptions& options) {
  DeflationTrace trace = EmptyTrace(run, instance);
  trace.has_metrics = true;
  const int r = run.r;
  const size_t cells = static_cast<size_t>(r) * (run.rounds + 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  trace.D.assign(cells, nan);
  trace.B.assign(cells, nan);
  trace.G.assign(cells, nan);
  trace.mismatch.assign(cells, nan);
  trace.mismatch_spectral.assign(cells, nan);
  trace.fit_unique.assign(cells, 0);
  if (r == 0) return trace;

  const Starred star = StarredComponents(instance, r);
  trace.b_defined = star.separated;
  for (int k = 0; k < r; ++k) {
    trace.clean_target_norm.push_back(star.targets[k].norm());
    trace.clean_sigma.push_back(star.sigma[k]);
  }

  for (int l = 0; l <= run.rounds; ++l) {
    for (int k = 1; k <= r; ++k) {
      const size_t i = trace.index(k, l);
      const Eigen::MatrixXd target = deflation_target(run, instance, k, l);
      const Eigen::MatrixXd product = ProductOf(run.pair(k, l), instance.X);
      const TopTriplet top = Top(target);
      const Eigen::MatrixXd fit =
          top.triplet.sigma * top.triplet.u * top.triplet.v.transpose();
      const Eigen::MatrixXd& ideal = star.products[k - 1];
      trace.D[i] = (product - fit).norm();
      if (trace.b_defined) trace.B[i] = (fit - ideal).norm();
      trace.G[i] = (product - ideal).norm();
      const Eigen::MatrixXd diff = target - star.targets[k - 1];
      trace.mismatch[i] = diff.norm();
      if (options.spectral_mismatch) {
        trace.mismatch_spectral[i] = spectral_norm(diff);
      }
      trace.fit_unique[i] = top.unique ? 1 : 0;
    }
  }
  return trace;
}

NashResiduals nash_residual(const DeflationRun& run,
                            const ProblemInstance& instance, int round) {
  if (round < 0 || round > run.rounds) {
    throw Error(ErrorKind::kParameter, "round out of range");
  }
  NashResiduals out;
  Eigen::MatrixXd target = instance.Y;
  for (int k = 1; k <= run.r; ++k) {
    const Eigen::MatrixXd product = ProductOf(run.pair(k, round), instance.X);
    const TopTriplet top = Top(target);
    const Eigen::MatrixXd fit =
        top.triplet.sigma * top.triplet.u * top.triplet.v.transpose();
    out.residual.push_back((product - fit).norm());
    out.flagged.push_back(top.unique ? 0 : 1);
    target -= product;
  }
  return out;
}

}  // namespace deflate
