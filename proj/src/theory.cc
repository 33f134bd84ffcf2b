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

#include "deflate/theory.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "deflate/errors.h"

namespace deflate {
namespace {

constexpr double kInvE = 1.0 / std::numbers::e;

// Wraps the two Lambert terms of the schedule: W_hat(a) / log(1/m).
double LambertTerm(double a, double m, bool* clamped) {
  bool c = false;
  const double value = w_hat(a, &c) / std::log(1.0 / m);
  if (c && clamped != nullptr) *clamped = true;
  return value;
}

}  // namespace

double lambert_w_neg1(double x) {
  if (std::abs(x + kInvE) <= 1e-15) return -1.0;
  if (!(x > -kInvE && x < 0.0)) {
    throw Error(ErrorKind::kDomain, "W_{-1} needs x in (-1/e, 0)");
  }
  double lo = -50.0;  // y e^y increases from ~0^- toward -1/e on [lo, hi]
  double hi = -1.0;
  if (!(lo * std::exp(lo) > x)) {
    throw Error(ErrorKind::kDomain, "W_{-1} root lies below -50");
  }
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (mid * std::exp(mid) > x) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double w_hat(double a, bool* clamped) {
  if (clamped != nullptr) *clamped = false;
  if (!(a > 0)) throw Error(ErrorKind::kDomain, "W_hat needs a > 0");
  if (a >= kInvE) {
    if (clamped != nullptr) *clamped = true;
    return 1.0;
  }
  const double value = std::max(1.0, -lambert_w_neg1(-a));
  const double log_inv = std::log(1.0 / a);
  if (value > log_inv + std::log(log_inv) + 1.0 + 1e-9) {
    throw Error(ErrorKind::kNumeric, "W_hat exceeded its explicit bound");
  }
  return value;
}

std::vector<double> effective_rates(const std::vector<double>& F) {
  std::vector<double> m(F.size());
  for (size_t i = 0; i < F.size(); ++i) {
    if (!(F[i] > 0 && F[i] < 1)) {
      throw Error(ErrorKind::kParameter,
                  "contraction factors must lie in (0, 1)");
    }
    const double k = static_cast<double>(i + 1);
    m[i] = i == 0 ? F[0] : std::max(F[i], 1.0 / k + (k - 1.0) * m[i - 1] / k);
  }
  return m;
}

RatePlan rate_plan(const std::vector<double>& sigma,
                   const std::vector<double>& F, double Q) {
  const int r = static_cast<int>(F.size());
  if (r < 1) throw Error(ErrorKind::kParameter, "need at least one component");
  if (static_cast<int>(sigma.size()) < r) {
    throw Error(ErrorKind::kDimension, "fewer singular values than components");
  }
  if (!std::isfinite(Q)) {
    throw Error(ErrorKind::kParameter, "the theory layer needs a finite Q");
  }
  if (Q < sigma[0] * (1.0 - 1e-12)) {
    throw Error(ErrorKind::kParameter, "Q must be at least sigma*_1");
  }
  const GapReport gaps = spectral_gaps(sigma);
  RatePlan plan;
  plan.Q = Q;
  plan.F = F;
  plan.sigma.assign(sigma.begin(), sigma.begin() + r);
  plan.gaps.assign(gaps.gaps.begin(), gaps.gaps.begin() + r);
  for (int k = 0; k < r; ++k) {
    if (!(plan.gaps[k] >= 1e-8 * sigma[0])) {
      throw Error(ErrorKind::kDegenerateGap,
                  "gap T*_" + std::to_string(k + 1) + " vanishes");
    }
  }
  if (Q < 2.0 * sigma[0]) {
    plan.warnings.push_back("Q below 2 sigma*_1");
  }
  plan.m = effective_rates(F);
  for (int k = 0; k < r; ++k) {
    const double kk = static_cast<double>(k + 1);
    plan.R.push_back(Q + plan.sigma[k]);
    plan.C.push_back(3.0 * plan.sigma[k] / plan.gaps[k] + 1.0);
    plan.gamma.push_back(1.0 / (kk + 1.0) + kk * plan.m[k] / (kk + 1.0));
  }
  for (int k = 0; k < r; ++k) {
    const bool ok = plan.m[k] > 0 && plan.m[k] < 1 &&
                    (k == 0 || plan.m[k] >= plan.m[k - 1]) &&
                    (k + 1 == r || plan.gamma[k] <= plan.m[k + 1] + 1e-15) &&
                    plan.F[k] <= plan.m[k];
    if (!ok) throw Error(ErrorKind::kNumeric, "rate invariants violated");
  }
  plan.s_exact = warmup_schedule(plan, ScheduleForm::kExact).s;
  plan.s_simplified = warmup_schedule(plan, ScheduleForm::kSimplified).s;
  return plan;
}

RatePlan rate_plan(const ProblemInstance& instance,
                   const std::vector<double>& F, double Q) {
  if (instance.gap_degenerate) {
    throw Error(ErrorKind::kDegenerateGap,
                "profile has no spectral gap; theory quantities undefined");
  }
  return rate_plan(instance.sigma_Y, F, Q);
}

WarmupSchedule warmup_schedule(const RatePlan& plan, ScheduleForm form,
                               const SimplifiedConstants& constants) {
  const int r = plan.r();
  WarmupSchedule out;
  out.s.assign(r, 1);
  out.s_hat.assign(r, 1);
  // Computes s_{k+1} from s_1..s_k with k 1-based.
  for (int k = 1; k < r; ++k) {
    const double kk = static_cast<double>(k);
    const double mk = plan.m[k - 1];
    const double T_next = plan.gaps[k];
    const double C_next = plan.C[k];
    double best = -1.0;
    for (int kp = 1; kp <= k; ++kp) {
      const double R_kp = plan.R[kp - 1];
      double candidate;
      if (form == ScheduleForm::kSimplified) {
        const double m = plan.m[kp - 1];
        candidate = out.s[kp - 1] +
                    (constants.c1 * std::log(kk * C_next * R_kp / T_next) +
                     constants.c2) /
                        (1.0 - m);
      } else {
        const double m =
            form == ScheduleForm::kExactGlobal ? mk : plan.m[kp - 1];
        const double mlog = m * std::abs(std::log(m));
        candidate =
            out.s[kp - 1] + LambertTerm(mlog / kk, m, &out.clamped) +
            LambertTerm(T_next * mlog / (6.0 * kk * R_kp * C_next), m,
                        &out.clamped);
      }
      best = std::max(best, candidate);
    }
    double offset;
    if (form == ScheduleForm::kSimplified) {
      offset = (kk + 1.0) * mk / (1.0 - mk) + constants.c3 / (1.0 - mk);
    } else {
      offset = (kk + 1.0) * mk / (1.0 - mk) + 2.0 +
               LambertTerm(mk * std::abs(std::log(mk)), mk, &out.clamped);
    }
    out.s_hat[k] = static_cast<int>(std::ceil(best));
    out.s[k] = static_cast<int>(std::ceil(best + offset));
  }
  return out;
}

double convergence_envelope(const RatePlan& plan, int k, int s_k, int l) {
  const double R = plan.R[k - 1];
  const double m = plan.m[k - 1];
  const int e = l - s_k + 1;
  return 3.0 * R * (e + 1) * std::pow(m, e);
}

double self_correction_envelope(const RatePlan& plan,
                                const std::vector<int>& s, int k, int l) {
  double total = 0.0;
  for (int kp = 1; kp < k; ++kp) {
    const int e = l - s[kp - 1];
    total += plan.R[kp - 1] * (e + 1) * std::pow(plan.m[kp - 1], e);
  }
  return 3.0 * total;
}

SurrogatePlan surrogate_sequences(const RatePlan& plan,
                                  const std::vector<int>& s,
                                  const std::vector<int>& s_hat,
                                  const std::vector<double>& D_boundary,
                                  int rounds) {
  const int r = plan.r();
  if (static_cast<int>(s.size()) != r || static_cast<int>(s_hat.size()) != r ||
      static_cast<int>(D_boundary.size()) != r) {
    throw Error(ErrorKind::kDimension, "schedules need one entry per component");
  }
  SurrogatePlan out;
  out.s_hat = s_hat;
  out.B_hat.assign(r, std::vector<double>(rounds + 1));
  out.G_hat.assign(r, std::vector<double>(rounds + 1));
  out.boundary_B.assign(r, 0.0);
  out.boundary_G.assign(r, 0.0);
  for (int k = 1; k <= r; ++k) {
    const double R = plan.R[k - 1];
    const int sk = s[k - 1];
    const int shk = s_hat[k - 1];
    if (shk > sk || shk < 1 || sk - 1 > rounds) {
      throw Error(ErrorKind::kSchedule, "inconsistent warm-up schedules");
    }
    std::vector<double>& Bk = out.B_hat[k - 1];
    if (k == 1) {
      std::fill(Bk.begin(), Bk.end(), R);
      out.boundary_B[0] = R;
    } else {
      double sum = 0.0;
      for (int kp = 1; kp < k; ++kp) sum += out.G_hat[kp - 1][shk - 1];
      const double boundary = plan.C[k - 1] * sum;
      out.boundary_B[k - 1] = boundary;
      const double m_prev = plan.m[k - 2];
      for (int l = 0; l <= rounds; ++l) {
        if (l < shk) {
          Bk[l] = R;
        } else {
          const int e = l - shk;
          Bk[l] = std::min(R, std::pow(m_prev, e) * (e + 1) * boundary);
        }
      }
    }
    auto B_at = [&](int l) { return l < 0 ? R : Bk[l]; };
    const double G0 = D_boundary[k - 1] + B_at(sk - 1) + B_at(sk - 2);
    out.boundary_G[k - 1] = G0;
    if (G0 > 3.0 * R * (1.0 + 1e-12)) out.boundary_exceeds_ceiling = true;
    const double m = plan.m[k - 1];
    std::vector<double>& Gk = out.G_hat[k - 1];
    for (int l = 0; l <= rounds; ++l) {
      if (l < sk) {
        Gk[l] = G0;
      } else {
        const int e = l - sk + 1;
        Gk[l] = std::pow(m, e) * (e + 1) * G0;
      }
    }
  }
  return out;
}

int detect_decay_start(const std::vector<double>& G, int activation,
                       const DecayFitOptions& options) {
  const int L = static_cast<int>(G.size()) - 1;
  if (activation < 0 || activation > L) {
    throw Error(ErrorKind::kParameter, "activation outside the trace");
  }
  const int window = options.window;
  const double floor = options.floor;
  auto decayed = [&](int j) { return G[j + 1] < G[j] || G[j + 1] <= floor; };

  // The value at the activation instant is the one carried into round
  // `activation`, i.e. G at the end of the previous round.
  const int start = std::max(activation - 1, 0);
  for (int l = start; l + window <= L; ++l) {
    bool ok = true;
    for (int j = l; j < l + window && ok; ++j) ok = decayed(j);
    if (ok) return l;
  }
  throw Error(ErrorKind::kNoFit, "no monotone decay window in the trace");
}

DecayFit fit_decay(const std::vector<double>& G, int activation,
                   const DecayFitOptions& options) {
  const int L = static_cast<int>(G.size()) - 1;
  const double floor = options.floor;
  DecayFit fit;
  fit.s_hat = detect_decay_start(G, activation, options);
  const int start = std::max(activation - 1, 0);

  const double half = 0.5 * G[start];
  std::vector<double> xs;
  std::vector<double> ys;
  for (int l = start; l <= L; ++l) {
    if (G[l] < half && G[l] > floor && G[l] > 0) {
      xs.push_back(l);
      ys.push_back(std::log(G[l]));
    }
  }
  if (xs.size() < 2) {
    throw Error(ErrorKind::kNoFit, "fewer than two rounds below half the "
                                   "activation value");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double sse = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (intercept + slope * xs[i]);
    sse += e * e;
  }
  fit.m_hat = std::exp(slope);
  fit.C_hat = std::exp(intercept);
  fit.residual = std::sqrt(sse / n);
  fit.points = static_cast<int>(xs.size());
  return fit;
}

namespace {

std::vector<double> NormalizedG(const DeflationTrace& trace, int k) {
  if (!trace.has_metrics) {
    throw Error(ErrorKind::kParameter, "trace has no error columns");
  }
  std::vector<double> G(trace.rounds + 1);
  for (int l = 0; l <= trace.rounds; ++l) {
    G[l] = trace.G[trace.index(k, l)] / trace.scale;
  }
  return G;
}

}  // namespace

int detect_decay_start(const DeflationTrace& trace, int k,
                       const DecayFitOptions& options) {
  return detect_decay_start(NormalizedG(trace, k), trace.activation[k - 1],
                            options);
}

DecayFit fit_decay(const DeflationTrace& trace, int k,
                   const DecayFitOptions& options) {
  return fit_decay(NormalizedG(trace, k), trace.activation[k - 1], options);
}

double noise_floor(double eps, int r_star, int d, int n) {
  return eps * std::sqrt(static_cast<double>(r_star) * d / n);
}

double noiseless_bound(const ProblemInstance& instance,
                       const DeflationRun& run) {
  if (instance.noise_level != 0.0) {
    throw Error(ErrorKind::kParameter, "noiseless bound needs epsilon = 0");
  }
  if (instance.sigma_min_x < 1e-10) {
    throw Error(ErrorKind::kDegenerateInput, "sigma_min(X) below 1e-10");
  }
  const int L = run.rounds;
  const Eigen::MatrixXd& Y = instance.Y_clean;
  const int p = static_cast<int>(std::min(Y.rows(), Y.cols()));
  const int used = std::min({run.r, instance.r_star, p});
  const std::vector<SvdTriplet> trip = top_svd(Y, used);
  double total = 0.0;
  for (int k = 1; k <= run.r; ++k) {
    const ComponentPair& pr = run.pair(k, L);
    Eigen::MatrixXd diff = pr.b * (instance.X.transpose() * pr.a).transpose();
    if (k <= used) {
      const SvdTriplet& t = trip[k - 1];
      diff -= t.sigma * t.u * t.v.transpose();
    }
    total += diff.norm();
  }
  total += instance.sigma_scale * tail_sum(instance.sigma_Y, run.r);
  return total / instance.sigma_min_x;
}

}  // namespace deflate
