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

#include "deflate/properties.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "deflate/core_model.h"
#include "deflate/deflation.h"
#include "deflate/random.h"
#include "deflate/rank1.h"
#include "deflate/runtime.h"

namespace deflate {

namespace {

constexpr double kSlack = 1e-9;

std::string Sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

std::string Count(int bad, int total) {
  return std::to_string(bad) + "/" + std::to_string(total) + " violations";
}

std::string Detail(const RowCheck& c) {
  return Count(c.violations, c.checked) + ", worst excess " + Sci(c.worst);
}

void Merge(RowCheck& into, const RowCheck& c) {
  into.checked += c.checked;
  into.violations += c.violations;
  into.worst = std::max(into.worst, c.worst);
}

void Record(RowCheck& c, double lhs, double rhs) {
  ++c.checked;
  if (lhs > rhs) ++c.violations;
  if (c.checked == 1) {
    c.worst = lhs - rhs;
  } else {
    c.worst = std::max(c.worst, lhs - rhs);
  }
}

// Random m x d matrix with singular values sigma (descending).
Eigen::MatrixXd Planted(Rng& rng, int m, int d, const std::vector<double>& sigma) {
  const int p = static_cast<int>(sigma.size());
  Eigen::HouseholderQR<Eigen::MatrixXd> qu(rng.GaussianMatrix(m, p));
  Eigen::HouseholderQR<Eigen::MatrixXd> qv(rng.GaussianMatrix(d, p));
  const Eigen::MatrixXd U = qu.householderQ() * Eigen::MatrixXd::Identity(m, p);
  const Eigen::MatrixXd V = qv.householderQ() * Eigen::MatrixXd::Identity(d, p);
  Eigen::VectorXd s(p);
  for (int i = 0; i < p; ++i) s[i] = sigma[i];
  return U * s.asDiagonal() * V.transpose();
}

Eigen::MatrixXd ProductOf(const ComponentPair& p, const Eigen::MatrixXd& X) {
  return p.b * (p.a.transpose() * X);
}

ComponentPair RandomPair(Rng& rng, int m, int d, double scale) {
  return {rng.GaussianVector(d, scale), rng.GaussianVector(m, scale)};
}

bool SameHistory(const DeflationRun& a, const DeflationRun& b) {
  if (a.history.size() != b.history.size()) return false;
  for (size_t l = 0; l < a.history.size(); ++l) {
    if (a.history[l].size() != b.history[l].size()) return false;
    for (size_t k = 0; k < a.history[l].size(); ++k) {
      const ComponentPair& x = a.history[l][k];
      const ComponentPair& y = b.history[l][k];
      if (x.a.size() != y.a.size() || x.b.size() != y.b.size()) return false;
      if (!(x.a.array() == y.a.array()).all()) return false;
      if (!(x.b.array() == y.b.array()).all()) return false;
    }
  }
  return true;
}

std::vector<double> ProbeRates(const ProblemInstance& inst, int r,
                               const Rank1Config& rc, int trials, uint64_t seed) {
  std::vector<double> F;
  for (int k = 1; k <= r; ++k) {
    F.push_back(estimate_contraction(inst, k, rc, trials, seed).value);
  }
  return F;
}

}  // namespace

double weyl_excess(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Delta) {
  const Eigen::VectorXd s = singular_values(M);
  const Eigen::VectorXd t = singular_values(M + Delta);
  return (t - s).cwiseAbs().maxCoeff() - spectral_norm(Delta);
}

WedinCheck wedin_check(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Delta) {
  WedinCheck w;
  Eigen::BDCSVD<Eigen::MatrixXd> a(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::BDCSVD<Eigen::MatrixXd> b(M + Delta,
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = a.singularValues();
  const Eigen::VectorXd& t = b.singularValues();
  const double gap = s.size() > 1 ? s[0] - s[1] : s[0];
  w.applicable = gap > 0 && spectral_norm(Delta) < 0.5 * gap;
  w.delta = s[0];
  for (int j = 1; j < t.size(); ++j) {
    w.delta = std::min(w.delta, std::abs(s[0] - t[j]));
  }
  const Eigen::VectorXd u = a.matrixU().col(0), v = a.matrixV().col(0);
  const double cu = u.dot(b.matrixU().col(0));
  const double cv = v.dot(b.matrixV().col(0));
  w.lhs = (1.0 - cu * cu) + (1.0 - cv * cv);
  w.rhs = ((Delta.transpose() * u).squaredNorm() + (Delta * v).squaredNorm()) /
          (w.delta * w.delta);
  return w;
}

RowCheck check_triangle(const DeflationTrace& t, double slack) {
  RowCheck c;
  if (!t.has_metrics || !t.b_defined) return c;
  for (size_t i = 0; i < t.G.size(); ++i) {
    Record(c, t.G[i] / t.scale, (t.D[i] + t.B[i]) / t.scale + slack);
  }
  return c;
}

RowCheck check_mismatch_bound(const DeflationTrace& t, double slack) {
  RowCheck c;
  if (!t.has_metrics) return c;
  for (int l = 1; l <= t.rounds; ++l) {
    double sum = 0.0;
    for (int k = 1; k <= t.r; ++k) {
      Record(c, t.mismatch[t.index(k, l)] / t.scale, sum + slack);
      sum += t.G[t.index(k, l - 1)] / t.scale;
    }
  }
  return c;
}

RowCheck check_b_bound(const DeflationTrace& t, const ProblemInstance& inst,
                       const RatePlan& plan, double slack) {
  RowCheck c;
  if (!t.has_metrics || !t.b_defined || t.mismatch_spectral.empty()) return c;
  const std::vector<double>& s = inst.sigma_Y;
  for (int k = 1; k <= t.r; ++k) {
    const double sk = k <= static_cast<int>(s.size()) ? s[k - 1] : 0.0;
    // Singular values past r_star are zero.
    double gap = sk;
    for (size_t j = k; j < s.size(); ++j) gap = std::min(gap, std::abs(sk - s[j]));
    for (int l = 0; l <= t.rounds; ++l) {
      const size_t i = t.index(k, l);
      if (!(t.mismatch_spectral[i] / t.scale < 0.5 * gap)) continue;
      Record(c, t.B[i] / t.scale, plan.C[k - 1] * t.mismatch[i] / t.scale + slack);
    }
  }
  return c;
}

PropertySuiteResult run_property_suite(const RunConfig& config) {
  PropertySuiteResult out;
  const uint64_t seed = config.seeds.front();
  Rng rng(seed, 0x5eed);

  // Weyl and Wedin on random perturbation pairs.
  {
    Rng g = rng.Split(1);
    RowCheck weyl, wedin;
    int applicable = 0;
    for (int t = 0; t < 200; ++t) {
      const int m = 4 + static_cast<int>(8 * g.Uniform());
      const int d = 4 + static_cast<int>(8 * g.Uniform());
      const int p = std::min(m, d);
      std::vector<double> sigma(p);
      for (int i = 0; i < p; ++i) sigma[i] = std::pow(0.6, i) * (1.0 + 0.2 * g.Uniform());
      std::sort(sigma.rbegin(), sigma.rend());
      const Eigen::MatrixXd M = Planted(g, m, d, sigma);
      Eigen::MatrixXd Delta = g.GaussianMatrix(m, d);
      // Scale so ||Delta||_2 lands below half the top gap.
      const double gap = sigma[0] - sigma[1];
      Delta *= 0.49 * gap * g.Uniform() / spectral_norm(Delta);
      Record(weyl, weyl_excess(M, Delta), kSlack);
      const WedinCheck w = wedin_check(M, Delta);
      if (!w.applicable) continue;
      ++applicable;
      Record(wedin, w.lhs, w.rhs + kSlack);
    }
    out.checks.push_back({"Weyl inequality on 200 perturbation pairs",
                          weyl.violations == 0, Detail(weyl)});
    out.checks.push_back({"Wedin bound on 200 perturbation pairs",
                          wedin.violations == 0 && applicable == 200,
                          Detail(wedin) + ", hypothesis held on " +
                              std::to_string(applicable)});
  }

  // One ALS sweep recovers a rank-1 truth exactly.
  {
    Rng g = rng.Split(2);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int m = 3 + static_cast<int>(10 * g.Uniform());
      const int d = 3 + static_cast<int>(10 * g.Uniform());
      const int n = d + 5 + static_cast<int>(20 * g.Uniform());
      const Eigen::MatrixXd X = g.GaussianMatrix(d, n);
      const GramSystem gram(X);
      const ComponentPair truth = RandomPair(g, m, d, 1.0);
      const Eigen::MatrixXd Y = ProductOf(truth, X);
      const ComponentPair warm = RandomPair(g, m, d, 1.0);
      const ComponentPair fit = als_sweeps(gram, Y * X.transpose(), 1, warm);
      worst = std::max(worst, (ProductOf(fit, X) - Y).norm() / Y.norm());
    }
    out.checks.push_back({"ALS one-sweep exactness on rank-1 truths",
                          worst < 1e-8, "worst relative error " + Sci(worst)});
  }

  // ALS never increases the objective.
  {
    Rng g = rng.Split(3);
    int bad = 0, total = 0;
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int m = 3 + static_cast<int>(10 * g.Uniform());
      const int d = 3 + static_cast<int>(10 * g.Uniform());
      const int n = d + 5 + static_cast<int>(20 * g.Uniform());
      const Eigen::MatrixXd X = g.GaussianMatrix(d, n);
      const GramSystem gram(X);
      const Eigen::MatrixXd Y = g.GaussianMatrix(m, n);
      const Eigen::MatrixXd N = Y * X.transpose();
      const double ysq = Y.squaredNorm();
      ComponentPair p = RandomPair(g, m, d, 0.1);
      double prev = bilinear_objective(gram, N, ysq, p);
      for (int s = 0; s < 10; ++s) {
        p = als_sweeps(gram, N, 1, p);
        const double cur = bilinear_objective(gram, N, ysq, p);
        ++total;
        const double excess = cur - prev;
        worst = std::max(worst, excess);
        if (excess > 1e-12 * std::max(1.0, prev)) ++bad;
        prev = cur;
      }
    }
    out.checks.push_back({"ALS objective monotonicity", bad == 0,
                          Count(bad, total) + ", largest increase " + Sci(worst)});
  }

  // Analytic gradient against central differences.
  {
    Rng g = rng.Split(4);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int m = 3 + static_cast<int>(5 * g.Uniform());
      const int d = 3 + static_cast<int>(5 * g.Uniform());
      const int n = d + 5;
      const Eigen::MatrixXd X = g.GaussianMatrix(d, n);
      const GramSystem gram(X);
      const Eigen::MatrixXd Y = g.GaussianMatrix(m, n);
      const Eigen::MatrixXd N = Y * X.transpose();
      const double ysq = Y.squaredNorm();
      const ComponentPair p = RandomPair(g, m, d, 1.0);
      const Rank1Gradient grad = bilinear_gradient(gram, N, p);
      Eigen::VectorXd analytic(d + m), numeric(d + m);
      analytic << grad.grad_a, grad.grad_b;
      const double h = 1e-6;
      for (int i = 0; i < d + m; ++i) {
        ComponentPair plus = p, minus = p;
        if (i < d) {
          plus.a[i] += h;
          minus.a[i] -= h;
        } else {
          plus.b[i - d] += h;
          minus.b[i - d] -= h;
        }
        numeric[i] = (bilinear_objective(gram, N, ysq, plus) -
                      bilinear_objective(gram, N, ysq, minus)) / (2 * h);
      }
      worst = std::max(worst, (analytic - numeric).norm() / analytic.norm());
    }
    out.checks.push_back({"GD gradient matches finite differences (rel 1e-4)",
                          worst <= 1e-4, "worst relative error " + Sci(worst)});
  }

  // Effective rates stay in (0, 1).
  {
    Rng g = rng.Split(5);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
      const int r = 1 + static_cast<int>(20 * g.Uniform());
      std::vector<double> F(r);
      for (double& f : F) f = g.Uniform();
      const std::vector<double> m = effective_rates(F);
      for (int k = 0; k < r; ++k) {
        if (!(m[k] > 0.0 && m[k] < 1.0) || (k > 0 && m[k] < m[k - 1])) {
          ++bad;
          break;
        }
      }
    }
    out.checks.push_back({"m_k in (0, 1) for 1000 random F vectors", bad == 0,
                          Count(bad, 1000)});
  }

  // Explicit upper bound of the Lambert-W wrapper.
  {
    Rng g = rng.Split(6);
    int bad = 0;
    double worst = -kInfinity;
    const double top = -1.0;  // log(1/e)
    for (int t = 0; t < 1000; ++t) {
      // log-uniform on (1e-12, 1/e)
      const double a = std::exp(top + (std::log(1e-12) - top) * g.Uniform());
      const double L = std::log(1.0 / a);
      const double bound = L + std::log(L) + 1.0;
      const double w = w_hat(a);
      worst = std::max(worst, w - bound);
      if (w > bound + 1e-12 || w < 1.0) ++bad;
    }
    out.checks.push_back({"w_hat explicit upper bound on 1000 samples",
                          bad == 0, Count(bad, 1000) + ", worst excess " + Sci(worst)});
  }

  const Rank1Config rc = [&] {
    Rank1Config r;
    r.method = config.method;
    r.inner_iters = config.inner_iters;
    return r;
  }();
  RowCheck triangle, mismatch, bbound;
  int nb_runs = 0, nb_bad = 0;
  double nb_worst = -kInfinity;
  auto noiseless_check = [&](const DeflationRun& run, const ProblemInstance& inst,
                  const DeflationTrace& t) {
    const double err = t.abs_weight_error.back();
    const double bound = noiseless_bound(inst, run);
    ++nb_runs;
    nb_worst = std::max(nb_worst, err - bound);
    if (err > bound + kSlack) ++nb_bad;
  };
  DecomposeOptions spectral;
  spectral.spectral_mismatch = true;

  // Surrogate domination with the exact warm-up schedule.
  {
    const ProblemInstance inst = generate_instance(
        30, 40, 100, 3, SpectralProfile::Exponential(), 0.0, seed);
    const std::vector<double> F = ProbeRates(inst, 3, rc, config.probe_trials, seed);
    const RatePlan plan = rate_plan(inst, F, 2.0);
    const WarmupSchedule ws = warmup_schedule(plan, ScheduleForm::kExact);
    ParallelConfig pc;
    pc.r = 3;
    pc.rounds = ws.s.back() + 20;
    pc.rank1 = rc;
    pc.Q = 2.0 * inst.sigma_scale;
    pc.activation = ws.s;
    pc.seed = seed;
    const DeflationRun run = parallel_deflate(inst, pc);
    const DeflationTrace t = decompose_errors(run, inst, spectral);
    std::vector<double> Db;
    for (int k = 1; k <= 3; ++k) {
      Db.push_back(t.D[t.index(k, ws.s[k - 1] - 1)] / t.scale);
    }
    const SurrogatePlan sp = surrogate_sequences(plan, ws.s, ws.s_hat, Db, pc.rounds);
    RowCheck dom;
    std::string where;
    for (int k = 1; k <= 3; ++k) {
      for (int l = 0; l <= pc.rounds; ++l) {
        const double B = t.B[t.index(k, l)] / t.scale;
        const int before = dom.violations;
        Record(dom, B, sp.B_hat[k - 1][l] + kSlack);
        if (l >= ws.s[k - 1] - 1) {
          const double G = t.G[t.index(k, l)] / t.scale;
          Record(dom, G, sp.G_hat[k - 1][l] + kSlack);
        }
        if (dom.violations > before && where.size() < 200) {
          where += " k=" + std::to_string(k) + " l=" + std::to_string(l);
        }
      }
    }
    out.checks.push_back({"surrogate domination (B_hat >= B, G_hat >= G), exact schedule",
                          dom.violations == 0,
                          Detail(dom) + (where.empty() ? "" : ", at" + where)});
    std::string s = "surrogate instance schedule s =";
    for (int v : ws.s) s += " " + std::to_string(v);
    s += ", probed F =";
    for (double f : F) s += " " + Sci(f);
    out.notes.push_back(s);

    Merge(triangle, check_triangle(t));
    Merge(mismatch, check_mismatch_bound(t));
    Merge(bbound, check_b_bound(t, inst, plan));
    noiseless_check(run, inst, t);

    TraceRow meta;
    meta.run_id = "verify-surrogate-seed" + std::to_string(seed);
    meta.seed = seed;
    meta.experiment = "verify";
    meta.profile = inst.profile.Label();
    meta.method = "parallel-exact-schedule";
    const size_t first = out.rows.size();
    append_trace(t, meta, out.rows);
    for (size_t i = first; i < out.rows.size(); ++i) {
      TraceRow& row = out.rows[i];
      if (row.k == 0) continue;
      row.surrogate_B = sp.B_hat[row.k - 1][row.round];
      row.surrogate_G = sp.G_hat[row.k - 1][row.round];
    }
  }

  // Desk instance: row-wise bounds, noiseless bound, Nash residual and
  // worker-count independence.
  {
    const SpectralProfile prof = ParseProfile(config.profiles.front());
    const ProblemInstance inst = generate_instance(
        config.m, config.d, config.n, config.r_star, prof, 0.0, seed, config.whiten_x);
    const int r = config.components();
    const std::vector<double> F = ProbeRates(inst, r, rc, config.probe_trials, seed);
    const RatePlan plan = rate_plan(inst, F, config.Q);
    ParallelConfig pc;
    pc.r = r;
    pc.rounds = config.rounds;
    pc.rank1 = rc;
    pc.Q = config.Q * inst.sigma_scale;
    pc.advance_learning = config.advance_learning;
    pc.seed = seed;
    const DeflationRun run = parallel_deflate(inst, pc);
    const DeflationTrace t = decompose_errors(run, inst, spectral);
    Merge(triangle, check_triangle(t));
    Merge(mismatch, check_mismatch_bound(t));
    Merge(bbound, check_b_bound(t, inst, plan));
    noiseless_check(run, inst, t);

    const DeflationRun srun = sequential_deflate(
        inst, r, std::vector<int>(r, config.inner_iters), rc, seed);
    const DeflationTrace st = decompose_errors(srun, inst, spectral);
    Merge(triangle, check_triangle(st));
    noiseless_check(srun, inst, st);

    const NashResiduals nash = nash_residual(run, inst, config.rounds);
    const double worst = *std::max_element(nash.residual.begin(), nash.residual.end());
    out.checks.push_back(
        {"Nash residual < 1e-3 sigma_1 after L = " + std::to_string(config.rounds),
         worst < 1e-3 * inst.sigma_scale,
         "max residual / sigma_1 = " + Sci(worst / inst.sigma_scale)});

    bool identical = true;
    for (int P : {1, 2, 4}) {
      const ShardedRun sr = run_sharded(inst, pc, P);
      if (!SameHistory(run, sr.run)) identical = false;
      noiseless_check(sr.run, inst, weight_errors(sr.run, inst));
    }
    out.checks.push_back({"bit-identical traces for P in {1, 2, 4}", identical,
                          identical ? "identical" : "histories differ"});

    TraceRow meta;
    meta.seed = seed;
    meta.experiment = "verify";
    meta.profile = prof.Label();
    meta.run_id = "verify-desk-parallel-seed" + std::to_string(seed);
    meta.method = "parallel";
    append_trace(t, meta, out.rows);
    meta.run_id = "verify-desk-sequential-seed" + std::to_string(seed);
    meta.method = "sequential";
    append_trace(st, meta, out.rows);
  }

  out.checks.push_back({"triangle G <= D + B on every trace row",
                        triangle.violations == 0, Detail(triangle)});
  out.checks.push_back({"target mismatch bound row-wise", mismatch.violations == 0,
                        Detail(mismatch)});
  out.checks.push_back({"B <= C_k mismatch where the gap hypothesis holds",
                        bbound.violations == 0, Detail(bbound)});
  out.checks.push_back({"noiseless weight-error bound on every noiseless run",
                        nb_bad == 0,
                        Count(nb_bad, nb_runs) + ", worst excess " + Sci(nb_worst)});
  return out;
}

}  // namespace deflate
