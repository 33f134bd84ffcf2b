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

#include "deflate/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <numeric>
#include <thread>

#include "deflate/errors.h"
#include "deflate/metrics.h"
#include "deflate/properties.h"
#include "deflate/runtime.h"
#include "deflate/theory.h"

namespace deflate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Normalized slack for comparisons against closed-form bounds once errors
// sit at the roundoff floor.
constexpr double kSlack = 1e-9;

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string Sci(double v) { return Fmt("%.3e", v); }

// Short form for parameter values in labels.
std::string Short(double v) { return Fmt("%g", v); }

// Runs fn(i) for i in [0, count) on up to the capped hardware thread count.
// Results must be written to per-index slots; the first exception is
// rethrown in index order.
void ForEachSeed(int count, const std::function<void(int)>& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int threads = std::min(count, capped_threads(static_cast<int>(hw)));
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          body(i);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

SpectralProfile ProfileFromName(const std::string& name) {
  return ParseProfile(name);
}

std::string MethodName(Rank1Config::Method m) {
  return m == Rank1Config::Method::kAls ? "als" : "gd";
}

Rank1Config::Method ParseMethod(const std::string& s) {
  if (s == "als") return Rank1Config::Method::kAls;
  if (s == "gd") return Rank1Config::Method::kGd;
  throw Error(ErrorKind::kConfig, "unknown rank-1 method '" + s + "'");
}

Rank1Config MakeRank1(const RunConfig& c) {
  Rank1Config r;
  r.method = c.method;
  r.inner_iters = c.inner_iters;
  return r;
}

ParallelConfig MakeParallel(const RunConfig& c, const ProblemInstance& inst,
                            uint64_t seed) {
  ParallelConfig p;
  p.r = c.components();
  p.rounds = c.rounds;
  p.rank1 = MakeRank1(c);
  p.Q = std::isfinite(c.Q) ? c.Q * inst.sigma_scale : kInfinity;
  p.advance_learning = c.advance_learning;
  p.seed = seed;
  return p;
}

DeflationRun RunParallel(const RunConfig& c, const ProblemInstance& inst,
                         const ParallelConfig& p) {
  return run_sharded(inst, p, c.workers.front()).run;
}

struct RowMeta {
  std::string run_id;
  uint64_t seed;
  std::string experiment;
  std::string profile;
  std::string method;

  TraceRow Row() const {
    TraceRow r;
    r.run_id = run_id;
    r.seed = seed;
    r.experiment = experiment;
    r.profile = profile;
    r.method = method;
    return r;
  }
};

TraceRow BaseRow(const RowMeta& m, int k, int round) {
  return blank_row(m.Row(), k, round);
}

void AppendTrace(const DeflationTrace& t, const RowMeta& meta,
                 std::vector<TraceRow>& rows) {
  append_trace(t, meta.Row(), rows);
}

// Full decomposition when the clean spectrum allows it, weight errors
// otherwise.
DeflationTrace Trace(const DeflationRun& run, const ProblemInstance& inst,
                     const DecomposeOptions& opt = {}) {
  if (inst.gap_degenerate) return weight_errors(run, inst);
  return decompose_errors(run, inst, opt);
}

std::string SeedTag(uint64_t seed) { return "seed" + std::to_string(seed); }

double MedianOver(const std::vector<double>& v) { return median_of(v); }

// ---------------------------------------------------------------------------

void RunConvergence(const RunConfig& c, ExperimentResult& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const int S = static_cast<int>(c.seeds.size());
  const int P = static_cast<int>(c.profiles.size());
  // final_err[p][seed] for parallel / sequential.
  std::vector<std::vector<double>> par(P, std::vector<double>(S));
  std::vector<std::vector<double>> seq(P, std::vector<double>(S));
  out.per_seed.assign(S, {});
  const std::string mname = MethodName(c.method);
  ForEachSeed(S, [&](int si) {
    const uint64_t seed = c.seeds[si];
    for (int p = 0; p < P; ++p) {
      const SpectralProfile prof = ProfileFromName(c.profiles[p]);
      const ProblemInstance inst = generate_instance(
          c.m, c.d, c.n, c.r_star, prof, 0.0, seed, c.whiten_x);
      const ParallelConfig pc = MakeParallel(c, inst, seed);
      const DeflationRun prun = RunParallel(c, inst, pc);
      const DeflationRun srun =
          sequential_deflate(inst, pc.r, std::vector<int>(pc.r, c.inner_iters),
                             pc.rank1, seed);
      const DeflationTrace pt = Trace(prun, inst);
      const DeflationTrace st = Trace(srun, inst);
      par[p][si] = pt.rel_weight_error.back();
      seq[p][si] = st.rel_weight_error.back();
      const std::string label = prof.Label();
      AppendTrace(pt, {"convergence-" + label + "-parallel-" + mname + "-" +
                           SeedTag(seed),
                       seed, "convergence", label, "parallel-" + mname},
                  out.per_seed[si]);
      AppendTrace(st, {"convergence-" + label + "-sequential-" + mname + "-" +
                           SeedTag(seed),
                       seed, "convergence", label, "sequential-" + mname},
                  out.per_seed[si]);
    }
  });
  out.seconds = Seconds(t0);

  Table summary{"summary", {"profile", "seed", "parallel", "sequential", "ratio"}, {}};
  for (int p = 0; p < P; ++p) {
    for (int si = 0; si < S; ++si) {
      summary.rows.push_back({c.profiles[p], std::to_string(c.seeds[si]),
                              FormatNumber(par[p][si]), FormatNumber(seq[p][si]),
                              FormatNumber(par[p][si] / seq[p][si])});
    }
  }
  out.tables.push_back(summary);

  for (int p = 0; p < P; ++p) {
    const double mp = MedianOver(par[p]);
    const double ms = MedianOver(seq[p]);
    const std::string& name = c.profiles[p];
    out.notes.push_back(name + ": median final error parallel " + Sci(mp) +
                        ", sequential " + Sci(ms));
    if (name == "exp") {
      out.checks.push_back({"parallel median final error on exp <= 6.3e-3",
                            mp <= 6.3e-3, "median " + Sci(mp)});
    }
    if (name == "exp" || name == "power") {
      const double ratio = mp / ms;
      out.checks.push_back(
          {"parallel/sequential final-error ratio <= 2 on " + name,
           ratio <= 2.0,
           "median parallel " + Sci(mp) + " / median sequential " + Sci(ms) +
               " = " + Sci(ratio)});
    }
  }
  out.checks.push_back({"runtime < 120 s", out.seconds < 120.0,
                        Fmt("%.2f s", out.seconds)});
}

// ---------------------------------------------------------------------------

void RunSelfCorrection(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  const int r = c.components();
  const int L = c.rounds;
  out.per_seed.assign(S, {});
  // ratio[k][seed] = mismatch(L) / mismatch(activation), k = 2..4.
  std::vector<std::vector<double>> ratio(r + 1, std::vector<double>(S, kNaN));
  std::vector<double> d3(S, kNaN), b3(S, kNaN);
  const SpectralProfile prof = ProfileFromName(c.profiles.front());
  const std::string mname = MethodName(c.method);
  ForEachSeed(S, [&](int si) {
    const uint64_t seed = c.seeds[si];
    const ProblemInstance inst =
        generate_instance(c.m, c.d, c.n, c.r_star, prof, 0.0, seed, c.whiten_x);
    const ParallelConfig pc = MakeParallel(c, inst, seed);
    const DeflationRun run = RunParallel(c, inst, pc);
    const DeflationTrace t = decompose_errors(run, inst);
    AppendTrace(t, {"self-correction-" + prof.Label() + "-" + SeedTag(seed),
                    seed, "self-correction", prof.Label(), "parallel-" + mname},
                out.per_seed[si]);
    for (int k = 2; k <= r; ++k) {
      const int s = t.activation[k - 1];
      const double at = t.mismatch[t.index(k, s)];
      ratio[k][si] = at > 0 ? t.mismatch[t.index(k, L)] / at : kNaN;
    }
    if (r >= 3) {
      const int s = t.activation[2];
      d3[si] = t.D[t.index(3, s)] / t.D[t.index(3, L)];
      b3[si] = t.B[t.index(3, s)] / t.B[t.index(3, L)];
    }
  });
  for (int k = 2; k <= std::min(4, r); ++k) {
    const double med = MedianOver(ratio[k]);
    out.checks.push_back({"worker " + std::to_string(k) +
                              " mismatch(L)/mismatch(activation) <= 1/3",
                          med <= 1.0 / 3.0, "median ratio " + Sci(med)});
  }
  if (r >= 3) {
    const double md = MedianOver(d3), mb = MedianOver(b3);
    out.checks.push_back({"worker 3 D decreases >= 5x", md >= 5.0,
                          "median factor " + Sci(md)});
    out.checks.push_back({"worker 3 B decreases >= 5x", mb >= 5.0,
                          "median factor " + Sci(mb)});
  }
}

// ---------------------------------------------------------------------------

void RunNoise(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  const int E = static_cast<int>(c.noise.size());
  out.per_seed.assign(S, {});
  std::vector<std::vector<double>> par(E, std::vector<double>(S));
  std::vector<std::vector<double>> seq(E, std::vector<double>(S));
  const SpectralProfile prof = ProfileFromName(c.profiles.front());
  const std::string mname = MethodName(c.method);
  ForEachSeed(S, [&](int si) {
    const uint64_t seed = c.seeds[si];
    for (int e = 0; e < E; ++e) {
      const double eps = c.noise[e];
      const ProblemInstance inst = generate_instance(
          c.m, c.d, c.n, c.r_star, prof, eps, seed, c.whiten_x);
      const ParallelConfig pc = MakeParallel(c, inst, seed);
      const DeflationRun prun = RunParallel(c, inst, pc);
      const DeflationRun srun =
          sequential_deflate(inst, pc.r, std::vector<int>(pc.r, c.inner_iters),
                             pc.rank1, seed);
      const DeflationTrace pt = Trace(prun, inst);
      const DeflationTrace st = Trace(srun, inst);
      par[e][si] = pt.abs_weight_error.back();
      seq[e][si] = st.abs_weight_error.back();
      const std::string label = prof.Label() + ":eps=" + Short(eps);
      AppendTrace(pt, {"noise-" + label + "-parallel-" + SeedTag(seed), seed,
                       "noise", label, "parallel-" + mname},
                  out.per_seed[si]);
      AppendTrace(st, {"noise-" + label + "-sequential-" + SeedTag(seed), seed,
                       "noise", label, "sequential-" + mname},
                  out.per_seed[si]);
    }
  });
  Table summary{"summary",
                {"eps", "seed", "parallel", "sequential", "ratio", "floor"},
                {}};
  double lo = kInfinity, hi = 0.0;
  bool floor_ok = true;
  std::string floor_detail;
  for (int e = 0; e < E; ++e) {
    const double eps = c.noise[e];
    const double floor = noise_floor(eps, c.r_star, c.d, c.n);
    for (int si = 0; si < S; ++si) {
      const double ratio = par[e][si] / seq[e][si];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      summary.rows.push_back({Short(eps), std::to_string(c.seeds[si]),
                              FormatNumber(par[e][si]), FormatNumber(seq[e][si]),
                              FormatNumber(ratio), FormatNumber(floor)});
      if (eps >= 0.1) {
        for (double err : {par[e][si], seq[e][si]}) {
          const double f = err / floor;
          if (!(f <= 3.0 && f >= 1.0 / 3.0)) floor_ok = false;
        }
      }
    }
    if (eps >= 0.1) {
      floor_detail += "eps=" + Short(eps) + ": error/floor in [" +
                      Fmt("%.3f", std::min(*std::min_element(par[e].begin(), par[e].end()),
                                           *std::min_element(seq[e].begin(), seq[e].end())) / floor) +
                      ", " +
                      Fmt("%.3f", std::max(*std::max_element(par[e].begin(), par[e].end()),
                                           *std::max_element(seq[e].begin(), seq[e].end())) / floor) +
                      "]; ";
    }
  }
  out.tables.push_back(summary);
  out.checks.push_back({"per-seed parallel/sequential ratio in [0.95, 1.05]",
                        lo >= 0.95 && hi <= 1.05,
                        "range [" + Fmt("%.4f", lo) + ", " + Fmt("%.4f", hi) + "]"});
  out.checks.push_back({"final errors within 3x of the noise floor (eps >= 0.1)",
                        floor_ok, floor_detail});
}

// ---------------------------------------------------------------------------

struct BoundsSeed {
  std::vector<double> m_hat, m_rec;
  std::vector<int> s_hat;
  std::vector<char> fitted;
  std::vector<char> dominated;
  std::vector<std::string> notes;
};

void RunBounds(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  const int r = c.components();
  out.per_seed.assign(S, {});
  std::vector<BoundsSeed> res(S);
  const SpectralProfile prof = ProfileFromName(c.profiles.front());
  const std::string mname = MethodName(c.method);
  const double Qn = std::isfinite(c.Q) ? c.Q : 2.0;
  ForEachSeed(S, [&](int si) {
    const uint64_t seed = c.seeds[si];
    const ProblemInstance inst =
        generate_instance(c.m, c.d, c.n, c.r_star, prof, 0.0, seed, c.whiten_x);
    const Rank1Config rc = MakeRank1(c);
    std::vector<double> F;
    for (int k = 1; k <= r; ++k) {
      F.push_back(estimate_contraction(inst, k, rc, c.probe_trials, seed).value);
    }
    const RatePlan plan = rate_plan(inst, F, Qn);
    ParallelConfig pc = MakeParallel(c, inst, seed);
    pc.Q = Qn * inst.sigma_scale;
    const DeflationRun run = RunParallel(c, inst, pc);
    const DeflationTrace t = decompose_errors(run, inst);
    BoundsSeed& b = res[si];
    b.m_rec = plan.m;
    b.m_hat.assign(r, kNaN);
    b.s_hat.assign(r, -1);
    b.fitted.assign(r, 0);
    b.dominated.assign(r, 0);
    std::vector<TraceRow> rows;
    AppendTrace(t, {"bounds-" + prof.Label() + "-" + SeedTag(seed), seed,
                    "bounds", prof.Label(), "parallel-" + mname},
                rows);
    for (int k = 1; k <= r; ++k) {
      // Fit only above the roundoff plateau: 10x the median of the last
      // five normalized G values.
      std::vector<double> tail;
      for (int l = std::max(0, c.rounds - 4); l <= c.rounds; ++l) {
        tail.push_back(t.G[t.index(k, l)] / t.scale);
      }
      DecayFitOptions opt;
      opt.floor = 10.0 * median_of(tail);
      try {
        b.s_hat[k - 1] = detect_decay_start(t, k, opt);
      } catch (const Error& e) {
        b.notes.push_back("seed " + std::to_string(seed) + " k=" +
                          std::to_string(k) + ": " + e.what());
        continue;
      }
      try {
        const DecayFit fit = fit_decay(t, k, opt);
        b.m_hat[k - 1] = fit.m_hat;
        b.fitted[k - 1] = 1;
      } catch (const Error& e) {
        b.notes.push_back("seed " + std::to_string(seed) + " k=" +
                          std::to_string(k) + ": " + e.what());
      }
      const int sh = b.s_hat[k - 1];
      bool ok = true;
      for (int l = sh + 2; l <= c.rounds; ++l) {
        const double env = convergence_envelope(plan, k, sh, l);
        if (t.G[t.index(k, l)] / t.scale > env + kSlack) ok = false;
      }
      b.dominated[k - 1] = ok;
      for (TraceRow& row : rows) {
        if (row.k == k && row.round >= std::max(sh - 1, 0)) {
          row.envelope = convergence_envelope(plan, k, sh, row.round);
        }
      }
    }
    out.per_seed[si] = std::move(rows);
  });

  Table table{"fits", {"seed", "k", "m_recurrence", "m_hat", "s_hat", "envelope_ok"}, {}};
  int cells = 0, dominated = 0;
  bool s_ok = true;
  bool m_ok = true;
  std::string m_detail, s_detail;
  for (int k = 1; k <= r; ++k) {
    std::vector<double> diff;
    for (int si = 0; si < S; ++si) {
      const BoundsSeed& b = res[si];
      table.rows.push_back({std::to_string(c.seeds[si]), std::to_string(k),
                            FormatNumber(b.m_rec[k - 1]),
                            FormatNumber(b.m_hat[k - 1]),
                            std::to_string(b.s_hat[k - 1]),
                            b.s_hat[k - 1] >= 0 ? (b.dominated[k - 1] ? "1" : "0") : ""});
      diff.push_back(b.fitted[k - 1] ? std::abs(b.m_hat[k - 1] - b.m_rec[k - 1])
                                     : kInfinity);
      ++cells;
      if (b.s_hat[k - 1] >= 0 && b.dominated[k - 1]) ++dominated;
      if (b.s_hat[k - 1] < 0 || b.s_hat[k - 1] > k + 3) {
        s_ok = false;
        s_detail += "seed " + std::to_string(c.seeds[si]) + " k=" +
                    std::to_string(k) + " s_hat=" +
                    std::to_string(b.s_hat[k - 1]) + "; ";
      }
    }
    const double md = median_of(diff);
    if (!(md <= 0.15)) m_ok = false;
    m_detail += "k=" + std::to_string(k) + ": " + Fmt("%.3f", md) + "; ";
  }
  for (const BoundsSeed& b : res) {
    out.notes.insert(out.notes.end(), b.notes.begin(), b.notes.end());
  }
  out.tables.push_back(table);
  out.checks.push_back({"(a) median |m_hat - m_k| <= 0.15 for every k", m_ok,
                        "median gaps " + m_detail});
  out.checks.push_back({"(b) detected s_hat_k <= k + 3", s_ok,
                        s_ok ? "all cells" : s_detail});
  const double frac = cells ? static_cast<double>(dominated) / cells : 0.0;
  out.checks.push_back({"(c) envelope dominates G for l >= s_hat + 2 in >= 95% of cells",
                        frac >= 0.95,
                        std::to_string(dominated) + "/" + std::to_string(cells) +
                            " cells"});
}

// ---------------------------------------------------------------------------

void RunGapSweep(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  const int Gn = static_cast<int>(c.gaps.size());
  out.per_seed.assign(S, {});
  std::vector<std::vector<double>> fin(Gn, std::vector<double>(S));
  std::vector<std::vector<double>> reach(Gn, std::vector<double>(S));
  const std::string mname = MethodName(c.method);
  ForEachSeed(S, [&](int si) {
    const uint64_t seed = c.seeds[si];
    for (int g = 0; g < Gn; ++g) {
      const SpectralProfile prof = SpectralProfile::LinearGap(c.gaps[g]);
      const ProblemInstance inst = generate_instance(
          c.m, c.d, c.n, c.r_star, prof, 0.0, seed, c.whiten_x);
      const ParallelConfig pc = MakeParallel(c, inst, seed);
      const DeflationRun run = RunParallel(c, inst, pc);
      const DeflationTrace t = Trace(run, inst);
      const double final_err = t.rel_weight_error.back();
      fin[g][si] = final_err;
      int first = c.rounds;
      for (int l = 0; l <= c.rounds; ++l) {
        if (t.rel_weight_error[l] <= 2.0 * final_err) {
          first = l;
          break;
        }
      }
      reach[g][si] = first;
      AppendTrace(t, {"gap-sweep-" + prof.Label() + "-" + SeedTag(seed), seed,
                      "gap-sweep", prof.Label(), "parallel-" + mname},
                  out.per_seed[si]);
    }
  });
  Table table{"summary", {"gap", "median_final", "median_rounds_to_2x_final"}, {}};
  bool below = true, monotone = true;
  std::string fin_detail, reach_detail;
  double prev = kInfinity;
  for (int g = 0; g < Gn; ++g) {
    const double mf = median_of(fin[g]);
    const double mr = median_of(reach[g]);
    table.rows.push_back({Short(c.gaps[g]), FormatNumber(mf), FormatNumber(mr)});
    if (!(mf < 1e-4)) below = false;
    if (mr > prev) monotone = false;
    prev = mr;
    fin_detail += "g=" + Short(c.gaps[g]) + ": " + Sci(mf) + "; ";
    reach_detail += "g=" + Short(c.gaps[g]) + ": " + FormatNumber(mr) + "; ";
  }
  out.tables.push_back(table);
  out.checks.push_back({"median final error < 1e-4 at every gap ratio", below,
                        fin_detail});
  out.checks.push_back({"rounds to reach 2x final nonincreasing in the gap ratio",
                        monotone, reach_detail});
}

// ---------------------------------------------------------------------------

void RunDiscover(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  out.per_seed.assign(S, {});
  std::vector<DiscoveryResult> scored(S), uniform(S);
  ForEachSeed(S, [&](int si) {
    DiscoveryConfig dc = c.discovery;
    dc.seed = c.seeds[si];
    dc.growth = GrowthRule::kScored;
    scored[si] = adapad_train(dc);
    dc.growth = GrowthRule::kUniform;
    uniform[si] = adapad_train(dc);
  });
  const DiscoveryConfig& dc = c.discovery;
  const int M = dc.modules();
  Table ranks{"ranks",
              {"seed", "growth", "round", "module", "true_rank", "rank",
               "raw_importance", "score", "rel_weight_error"},
              {}};
  std::vector<double> rho(S), err_scored(S), err_uniform(S);
  bool budget_ok = true;
  for (int si = 0; si < S; ++si) {
    const uint64_t seed = c.seeds[si];
    for (int pass = 0; pass < 2; ++pass) {
      const DiscoveryResult& res = pass == 0 ? scored[si] : uniform[si];
      const std::string growth = pass == 0 ? "scored" : "uniform";
      for (size_t l = 0; l < res.ranks.size(); ++l) {
        int total = 0;
        for (int i = 0; i < M; ++i) {
          total += res.ranks[l][i];
          if (res.ranks[l][i] > dc.r_max) budget_ok = false;
          ranks.rows.push_back(
              {std::to_string(seed), growth, std::to_string(l), std::to_string(i),
               std::to_string(dc.true_ranks[i]), std::to_string(res.ranks[l][i]),
               FormatNumber(res.raw_importance[l][i]),
               FormatNumber(res.scores[l][i]),
               FormatNumber(res.module_errors[l][i])});
          RowMeta meta{"discover-" + growth + "-module" + std::to_string(i) + "-" +
                           SeedTag(seed),
                       seed, "discover",
                       "module" + std::to_string(i) + ":rank=" +
                           std::to_string(dc.true_ranks[i]),
                       "adapad-" + growth};
          TraceRow row = BaseRow(meta, 0, static_cast<int>(l));
          row.rel_weight_error = res.module_errors[l][i];
          out.per_seed[si].push_back(row);
        }
        if (total > dc.budget) budget_ok = false;
        RowMeta meta{"discover-" + growth + "-total-" + SeedTag(seed), seed,
                     "discover", "total", "adapad-" + growth};
        TraceRow row = BaseRow(meta, 0, static_cast<int>(l));
        row.rel_weight_error = res.total_error[l];
        out.per_seed[si].push_back(row);
      }
    }
    std::vector<double> found, truth;
    for (int i = 0; i < M; ++i) {
      found.push_back(scored[si].final_ranks[i]);
      truth.push_back(dc.true_ranks[i]);
    }
    rho[si] = spearman(found, truth);
    err_scored[si] = scored[si].total_error.back();
    err_uniform[si] = uniform[si].total_error.back();
  }
  out.tables.push_back(ranks);
  const double mr = median_of(rho);
  out.checks.push_back({"median Spearman(discovered, true rank) >= 0.5",
                        mr >= 0.5, "median " + Fmt("%.3f", mr)});
  out.checks.push_back({"sum r_i <= B and r_i <= r_max at every round",
                        budget_ok, budget_ok ? "held" : "violated"});
  const double es = median_of(err_scored), eu = median_of(err_uniform);
  out.checks.push_back({"uniform growth error >= scored growth error",
                        eu >= es,
                        "median scored " + Sci(es) + ", uniform " + Sci(eu)});
}

// ---------------------------------------------------------------------------

bool SameHistory(const DeflationRun& a, const DeflationRun& b) {
  if (a.history.size() != b.history.size()) return false;
  for (size_t l = 0; l < a.history.size(); ++l) {
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

void RunScaling(const RunConfig& c, ExperimentResult& out) {
  const int S = static_cast<int>(c.seeds.size());
  out.per_seed.assign(S, {});
  const SpectralProfile prof = ProfileFromName(c.profiles.front());
  Table timing{"timing", {"seed", "P", "threads", "r", "round", "seconds"}, {}};
  std::vector<int> Ps = c.workers;
  std::sort(Ps.begin(), Ps.end());
  Ps.erase(std::unique(Ps.begin(), Ps.end()), Ps.end());
  // mean round seconds per P, collected over seeds.
  std::vector<std::vector<double>> mean_secs(Ps.size());
  bool identical = true;
  const unsigned cores = std::thread::hardware_concurrency();
  for (int si = 0; si < S; ++si) {
    const uint64_t seed = c.seeds[si];
    const ProblemInstance inst =
        generate_instance(c.m, c.d, c.n, c.r_star, prof, 0.0, seed, c.whiten_x);
    const ParallelConfig pc = MakeParallel(c, inst, seed);
    DeflationRun reference;
    for (size_t pi = 0; pi < Ps.size(); ++pi) {
      const ShardedRun sr = run_sharded(inst, pc, Ps[pi]);
      for (size_t l = 0; l < sr.timings.seconds.size(); ++l) {
        timing.rows.push_back({std::to_string(seed), std::to_string(Ps[pi]),
                               std::to_string(sr.threads), std::to_string(pc.r),
                               std::to_string(l + 1),
                               FormatNumber(sr.timings.seconds[l])});
      }
      mean_secs[pi].push_back(sr.timings.mean);
      if (pi == 0) {
        reference = sr.run;
        const DeflationTrace t = weight_errors(sr.run, inst);
        AppendTrace(t, {"scaling-" + prof.Label() + "-" + SeedTag(seed), seed,
                        "scaling", prof.Label(), "parallel-" + MethodName(c.method)},
                    out.per_seed[si]);
      } else if (!SameHistory(reference, sr.run)) {
        identical = false;
      }
    }
  }
  out.tables.push_back(timing);
  out.notes.push_back("host reports " + std::to_string(cores) +
                      " hardware threads");
  out.checks.push_back({"traces identical across P", identical,
                        identical ? "bit-identical" : "differ"});
  auto speedup = [&](int P) {
    size_t base = 0, idx = Ps.size();
    for (size_t i = 0; i < Ps.size(); ++i) {
      if (Ps[i] == 1) base = i;
      if (Ps[i] == P) idx = i;
    }
    if (idx == Ps.size() || Ps[base] != 1) return kNaN;
    return median_of(mean_secs[base]) / median_of(mean_secs[idx]);
  };
  const double s2 = speedup(2), s4 = speedup(4);
  out.checks.push_back({"speedup(P=2) >= 1.3", s2 >= 1.3,
                        Fmt("%.3f", s2) + "x on " + std::to_string(cores) +
                            " hardware threads"});
  out.checks.push_back({"speedup(P=4) >= 1.5", s4 >= 1.5,
                        Fmt("%.3f", s4) + "x on " + std::to_string(cores) +
                            " hardware threads"});
}

// ---------------------------------------------------------------------------

void RunVerify(const RunConfig& c, ExperimentResult& out) {
  PropertySuiteResult suite = run_property_suite(c);
  out.checks = std::move(suite.checks);
  out.notes = std::move(suite.notes);
  out.per_seed.assign(1, std::move(suite.rows));
}

}  // namespace

// ---------------------------------------------------------------------------

Experiment ParseExperiment(const std::string& name) {
  if (name == "convergence") return Experiment::kConvergence;
  if (name == "self-correction") return Experiment::kSelfCorrection;
  if (name == "noise") return Experiment::kNoise;
  if (name == "bounds") return Experiment::kBounds;
  if (name == "gap-sweep") return Experiment::kGapSweep;
  if (name == "discover") return Experiment::kDiscover;
  if (name == "scaling") return Experiment::kScaling;
  if (name == "verify") return Experiment::kVerify;
  throw Error(ErrorKind::kConfig, "unknown experiment '" + name + "'");
}

std::string ExperimentName(Experiment e) {
  switch (e) {
    case Experiment::kConvergence: return "convergence";
    case Experiment::kSelfCorrection: return "self-correction";
    case Experiment::kNoise: return "noise";
    case Experiment::kBounds: return "bounds";
    case Experiment::kGapSweep: return "gap-sweep";
    case Experiment::kDiscover: return "discover";
    case Experiment::kScaling: return "scaling";
    case Experiment::kVerify: return "verify";
  }
  return "unknown";
}

RunConfig default_config(Experiment e) {
  RunConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::kConvergence:
      c.profiles = {"exp", "power", "uniform"};
      break;
    case Experiment::kSelfCorrection:
      c.m = 50, c.d = 80, c.n = 200, c.r_star = 5, c.rounds = 30;
      break;
    case Experiment::kNoise:
      c.m = 50, c.d = 80, c.n = 200, c.r_star = 5, c.rounds = 15;
      c.noise = {0.01, 0.1, 0.5, 1.0};
      break;
    case Experiment::kBounds:
      c.m = 50, c.d = 80, c.n = 200, c.r_star = 5, c.rounds = 40;
      c.Q = 2.0;
      break;
    case Experiment::kGapSweep:
      c.m = 50, c.d = 80, c.n = 200, c.r_star = 5, c.rounds = 30;
      c.profiles = {"lingap"};
      c.gaps = {0.01, 0.05, 0.1, 0.25, 0.5};
      break;
    case Experiment::kDiscover:
      c.m = c.discovery.m, c.d = c.discovery.d, c.n = c.discovery.n;
      c.r_star = 4;
      c.rounds = c.discovery.rounds;
      c.inner_iters = c.discovery.rank1.inner_iters;
      break;
    case Experiment::kScaling:
      c.r_star = 16;
      c.rounds = 20;
      c.seeds = {1};
      c.workers = {1, 2, 4};
      break;
    case Experiment::kVerify:
      c.m = 50, c.d = 80, c.n = 200, c.r_star = 5, c.rounds = 40;
      c.seeds = {1};
      c.Q = 2.0;
      break;
  }
  return c;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::kConfig, what);
  };
  if (c.m < 1 || c.d < 1 || c.n < 1) fail("dimensions must be positive");
  if (c.r_star < 1 || c.r_star > std::min(c.m, c.d)) {
    fail("rank must lie in [1, min(m, d)]");
  }
  if (c.rank < 0 || c.components() > std::min(c.m, c.d)) {
    fail("extracted rank must lie in [1, min(m, d)]");
  }
  if (c.d > c.n) fail("need d <= n so that X has full row rank");
  if (c.inner_iters < 1) fail("inner iterations must be >= 1");
  if (c.rounds < 1) fail("rounds must be >= 1");
  if (!(c.Q > 0)) fail("Q must be positive or inf");
  if (c.seeds.empty()) fail("at least one seed is required");
  if (c.profiles.empty()) fail("at least one profile is required");
  for (const std::string& p : c.profiles) ParseProfile(p);
  if (c.workers.empty()) fail("at least one worker count is required");
  for (int w : c.workers) {
    if (w < 1) fail("worker counts must be >= 1");
  }
  for (double e : c.noise) {
    if (!(e >= 0) || !std::isfinite(e)) fail("noise levels must be >= 0");
  }
  for (double g : c.gaps) {
    if (!(g > 0) || !std::isfinite(g)) fail("gap ratios must be positive");
  }
  if (c.probe_trials < 1) fail("probe trials must be >= 1");
  switch (c.experiment) {
    case Experiment::kNoise:
      if (c.noise.empty()) fail("noise experiment needs --noise values");
      break;
    case Experiment::kGapSweep:
      if (c.gaps.empty()) fail("gap sweep needs --gap values");
      break;
    case Experiment::kDiscover:
      validate(c.discovery);
      break;
    case Experiment::kBounds:
    case Experiment::kVerify:
      if (!std::isfinite(c.Q)) {
        fail("this experiment needs a finite Q (theory quantities use it)");
      }
      if (c.Q < 1.0) fail("Q must be at least sigma_1 (Q >= 1 in units of sigma_1)");
      break;
    default:
      break;
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["experiment"] = ExperimentName(c.experiment);
  j["m"] = c.m;
  j["d"] = c.d;
  j["n"] = c.n;
  j["r_star"] = c.r_star;
  j["rank"] = c.components();
  j["profiles"] = c.profiles;
  j["method"] = MethodName(c.method);
  j["inner_iters"] = c.inner_iters;
  j["rounds"] = c.rounds;
  j["q"] = std::isfinite(c.Q) ? nlohmann::json(c.Q) : nlohmann::json("inf");
  j["seeds"] = c.seeds;
  j["noise"] = c.noise;
  j["gaps"] = c.gaps;
  j["workers"] = c.workers;
  j["advance_learning"] = c.advance_learning;
  j["whiten_x"] = c.whiten_x;
  j["probe_trials"] = c.probe_trials;
  const DiscoveryConfig& dc = c.discovery;
  nlohmann::json dj;
  dj["true_ranks"] = dc.true_ranks;
  dj["m"] = dc.m;
  dj["d"] = dc.d;
  dj["n"] = dc.n;
  dj["profile"] = dc.profile.Name();
  dj["noise"] = dc.noise_level;
  dj["whiten_x"] = dc.whiten_x;
  dj["r_max"] = dc.r_max;
  dj["budget"] = dc.budget;
  dj["batches"] = dc.batches;
  dj["batch_size"] = dc.batch_size;
  dj["top_h"] = dc.top_h;
  dj["beta1"] = dc.beta1;
  dj["beta2"] = dc.beta2;
  dj["pre_update_volatility"] = dc.pre_update_volatility;
  dj["lambda_orth"] = dc.lambda_orth;
  dj["method"] = MethodName(dc.rank1.method);
  dj["inner_iters"] = dc.rank1.inner_iters;
  dj["rounds"] = dc.rounds;
  dj["warmup_rounds"] = dc.warmup_rounds;
  dj["init_scale"] = dc.init_scale;
  j["discovery"] = dj;
  j["out"] = c.out_dir;
  j["format"] = FormatName(c.format);
  return j;
}

namespace {

template <typename T>
T Get(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig,
                std::string("config key '") + key + "': " + e.what());
  }
}

double GetQ(const nlohmann::json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return kInfinity;
    throw Error(ErrorKind::kConfig, "q must be a number or \"inf\"");
  }
  if (!v.is_number()) throw Error(ErrorKind::kConfig, "q must be a number");
  return v.get<double>();
}

DiscoveryConfig ApplyDiscovery(DiscoveryConfig dc, const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "true_ranks") dc.true_ranks = Get<std::vector<int>>(j, "true_ranks");
    else if (k == "m") dc.m = Get<int>(j, "m");
    else if (k == "d") dc.d = Get<int>(j, "d");
    else if (k == "n") dc.n = Get<int>(j, "n");
    else if (k == "profile") dc.profile = ParseProfile(Get<std::string>(j, "profile"));
    else if (k == "noise") dc.noise_level = Get<double>(j, "noise");
    else if (k == "whiten_x") dc.whiten_x = Get<bool>(j, "whiten_x");
    else if (k == "r_max") dc.r_max = Get<int>(j, "r_max");
    else if (k == "budget") dc.budget = Get<int>(j, "budget");
    else if (k == "batches") dc.batches = Get<int>(j, "batches");
    else if (k == "batch_size") dc.batch_size = Get<int>(j, "batch_size");
    else if (k == "top_h") dc.top_h = Get<int>(j, "top_h");
    else if (k == "beta1") dc.beta1 = Get<double>(j, "beta1");
    else if (k == "beta2") dc.beta2 = Get<double>(j, "beta2");
    else if (k == "pre_update_volatility") dc.pre_update_volatility = Get<bool>(j, "pre_update_volatility");
    else if (k == "lambda_orth") dc.lambda_orth = Get<double>(j, "lambda_orth");
    else if (k == "method") dc.rank1.method = ParseMethod(Get<std::string>(j, "method"));
    else if (k == "inner_iters") dc.rank1.inner_iters = Get<int>(j, "inner_iters");
    else if (k == "rounds") dc.rounds = Get<int>(j, "rounds");
    else if (k == "warmup_rounds") dc.warmup_rounds = Get<int>(j, "warmup_rounds");
    else if (k == "init_scale") dc.init_scale = Get<double>(j, "init_scale");
    else throw Error(ErrorKind::kConfig, "unknown discovery key '" + k + "'");
  }
  return dc;
}

}  // namespace

RunConfig apply_json(RunConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "experiment") {
      c.experiment = ParseExperiment(Get<std::string>(j, "experiment"));
    } else if (k == "m") c.m = Get<int>(j, "m");
    else if (k == "d") c.d = Get<int>(j, "d");
    else if (k == "n") c.n = Get<int>(j, "n");
    else if (k == "r_star") c.r_star = Get<int>(j, "r_star");
    else if (k == "rank") c.rank = Get<int>(j, "rank");
    else if (k == "profiles") c.profiles = Get<std::vector<std::string>>(j, "profiles");
    else if (k == "profile") c.profiles = {Get<std::string>(j, "profile")};
    else if (k == "method") c.method = ParseMethod(Get<std::string>(j, "method"));
    else if (k == "inner_iters") c.inner_iters = Get<int>(j, "inner_iters");
    else if (k == "rounds") c.rounds = Get<int>(j, "rounds");
    else if (k == "q") c.Q = GetQ(j.at("q"));
    else if (k == "seeds") c.seeds = Get<std::vector<uint64_t>>(j, "seeds");
    else if (k == "noise") c.noise = Get<std::vector<double>>(j, "noise");
    else if (k == "gaps") c.gaps = Get<std::vector<double>>(j, "gaps");
    else if (k == "workers") c.workers = Get<std::vector<int>>(j, "workers");
    else if (k == "advance_learning") c.advance_learning = Get<bool>(j, "advance_learning");
    else if (k == "whiten_x") c.whiten_x = Get<bool>(j, "whiten_x");
    else if (k == "probe_trials") c.probe_trials = Get<int>(j, "probe_trials");
    else if (k == "discovery") c.discovery = ApplyDiscovery(c.discovery, j.at(k));
    else if (k == "out") c.out_dir = Get<std::string>(j, "out");
    else if (k == "format") c.format = ParseFormat(Get<std::string>(j, "format"));
    else throw Error(ErrorKind::kConfig, "unknown config key '" + k + "'");
  }
  return c;
}

bool ExperimentResult::passed() const {
  for (const CheckResult& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

ExperimentResult run_experiment(const RunConfig& config) {
  validate(config);
  ExperimentResult out;
  out.experiment = config.experiment;
  const auto t0 = std::chrono::steady_clock::now();
  switch (config.experiment) {
    case Experiment::kConvergence: RunConvergence(config, out); break;
    case Experiment::kSelfCorrection: RunSelfCorrection(config, out); break;
    case Experiment::kNoise: RunNoise(config, out); break;
    case Experiment::kBounds: RunBounds(config, out); break;
    case Experiment::kGapSweep: RunGapSweep(config, out); break;
    case Experiment::kDiscover: RunDiscover(config, out); break;
    case Experiment::kScaling: RunScaling(config, out); break;
    case Experiment::kVerify: RunVerify(config, out); break;
  }
  if (out.seconds == 0.0) out.seconds = Seconds(t0);
  return out;
}

RunReport write_report(const RunConfig& config, const ExperimentResult& result) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) {
    throw Error(ErrorKind::kIo, "cannot create " + config.out_dir + ": " +
                                    ec.message());
  }
  RunReport report;
  nlohmann::json meta;
  meta["tool"] = "deflate_lab";
  meta["schema_version"] = 1;
  meta["config"] = to_json(config);
  meta["seeds"] = config.seeds;
  report.metadata = meta;
  const std::string name = ExperimentName(config.experiment);
  const std::string ext = FormatExtension(config.format);
  const bool seeded = result.per_seed.size() == config.seeds.size();
  for (size_t i = 0; i < result.per_seed.size(); ++i) {
    const std::string tag =
        seeded ? "seed" + std::to_string(config.seeds[i]) : "run" + std::to_string(i);
    const std::string path = (fs::path(config.out_dir) / (name + "_" + tag + ext)).string();
    nlohmann::json m = meta;
    if (seeded) m["seed"] = config.seeds[i];
    emit_trace(result.per_seed[i], path, config.format, m);
    report.files.push_back(path);
  }
  const std::string agg = (fs::path(config.out_dir) / (name + "_aggregate" + ext)).string();
  emit_aggregate(aggregate(result.per_seed), agg, config.format, meta);
  report.files.push_back(agg);
  for (const Table& t : result.tables) {
    const std::string path = (fs::path(config.out_dir) / (name + "_" + t.name + ext)).string();
    emit_table(t, path, config.format, meta);
    report.files.push_back(path);
  }
  Table checks{"checks", {"check", "passed", "detail"}, {}};
  for (const CheckResult& c : result.checks) {
    checks.rows.push_back({c.name, c.passed ? "1" : "0", c.detail});
  }
  // Check names and details may hold commas; the checks file is JSON.
  const std::string cpath = (fs::path(config.out_dir) / (name + "_checks.json")).string();
  emit_table(checks, cpath, Format::kJson, meta);
  report.files.push_back(cpath);
  return report;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::kDimension, "spearman needs equal-length inputs");
  }
  const size_t n = x.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (size_t i = 0; i < n;) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace deflate
