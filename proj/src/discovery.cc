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

#include "deflate/discovery.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deflate/errors.h"

namespace deflate {

namespace {

ComponentPair RandomPair(int d, int m, double scale, Rng& rng) {
  ComponentPair p;
  p.a = rng.GaussianVector(d, scale);
  p.b = rng.GaussianVector(m, scale);
  return p;
}

// Column subsets for one round, drawn by partial Fisher-Yates.
std::vector<std::vector<int>> DrawBatches(int n, int count, int size,
                                          Rng& rng) {
  std::vector<std::vector<int>> out(count);
  std::vector<int> perm(n);
  for (int c = 0; c < count; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < size; ++i) {
      const int j = i + static_cast<int>(rng.Uniform() * (n - i));
      std::swap(perm[i], perm[std::min(j, n - 1)]);
    }
    out[c].assign(perm.begin(), perm.begin() + size);
    std::sort(out[c].begin(), out[c].end());
  }
  return out;
}

Eigen::MatrixXd Columns(const Eigen::MatrixXd& A, const std::vector<int>& idx) {
  Eigen::MatrixXd out(A.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(j) = A.col(idx[j]);
  return out;
}

Eigen::MatrixXd Weight(const std::vector<ComponentPair>& pairs, int m, int d) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, d);
  for (const ComponentPair& p : pairs) W += p.b * p.a.transpose();
  return W;
}

double RelError(const ProblemInstance& inst,
                const std::vector<ComponentPair>& pairs) {
  const double ref = inst.W_star.norm();
  const Eigen::MatrixXd diff = inst.W_star - Weight(pairs, inst.m, inst.d);
  return ref > 0 ? diff.norm() / ref : diff.norm();
}

int TotalRank(const std::vector<ModuleState>& states) {
  int R = 0;
  for (const ModuleState& s : states) R += s.r;
  return R;
}

void Promote(ModuleState& s, const DiscoveryConfig& cfg, Rng& rng) {
  s.committed.push_back(s.reserve);
  s.r = static_cast<int>(s.committed.size());
  s.reserve = RandomPair(s.instance.d, s.instance.m, cfg.init_scale, rng);
}

}  // namespace

void validate(const DiscoveryConfig& cfg) {
  const int M = cfg.modules();
  if (M < 1) throw Error(ErrorKind::kConfig, "need at least one module");
  for (int t : cfg.true_ranks) {
    if (t < 1) throw Error(ErrorKind::kConfig, "true ranks must be >= 1");
  }
  if (cfg.r_max < 1) throw Error(ErrorKind::kConfig, "r_max must be >= 1");
  if (cfg.budget < M || cfg.budget > M * cfg.r_max) {
    throw Error(ErrorKind::kConfig,
                "budget must satisfy M <= B <= M * r_max (M=" +
                    std::to_string(M) + ", B=" + std::to_string(cfg.budget) +
                    ", r_max=" + std::to_string(cfg.r_max) + ")");
  }
  if (cfg.top_h < 1 || cfg.top_h > M) {
    throw Error(ErrorKind::kConfig, "top_h must lie in [1, M]");
  }
  auto open_unit = [](double b) { return b > 0.0 && b < 1.0; };
  if (!open_unit(cfg.beta1) || !open_unit(cfg.beta2)) {
    throw Error(ErrorKind::kConfig, "EMA coefficients must lie in (0, 1)");
  }
  if (!(cfg.lambda_orth >= 0.0)) {
    throw Error(ErrorKind::kConfig, "lambda_orth must be >= 0");
  }
  if (cfg.batches < 1 || cfg.batch_size < cfg.d || cfg.batch_size > cfg.n) {
    throw Error(ErrorKind::kConfig,
                "need batches >= 1 and d <= batch_size <= n");
  }
  if (cfg.rounds < 1 || cfg.warmup_rounds < 0) {
    throw Error(ErrorKind::kConfig, "rounds must be >= 1, warm-up >= 0");
  }
  if (cfg.rank1.inner_iters < 1) {
    throw Error(ErrorKind::kConfig, "inner iterations must be >= 1");
  }
}

ImportanceScore raw_importance(const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& grads) {
  if (theta.size() != grads.size()) {
    throw Error(ErrorKind::kDimension, "theta and gradient sizes differ");
  }
  ImportanceScore s;
  const double norm = theta.norm();
  if (norm < 1e-12) {
    s.zero_theta = true;
    return s;
  }
  s.value = (theta.cwiseAbs().cwiseProduct(grads.cwiseAbs())).sum() /
            std::sqrt(norm);
  return s;
}

EmaState update_ema(double S_bar, double U, double S, double beta1,
                    double beta2, bool pre_update_volatility) {
  EmaState out;
  out.S_bar = beta1 * S_bar + (1.0 - beta1) * S;
  const double ref = pre_update_volatility ? S_bar : out.S_bar;
  out.U = beta2 * U + (1.0 - beta2) * std::abs(S - ref);
  return out;
}

std::vector<int> grow_step(std::vector<ModuleState>& states,
                           const DiscoveryConfig& cfg, Rng& rng) {
  std::vector<int> eligible;
  for (size_t i = 0; i < states.size(); ++i) {
    if (states[i].r < cfg.r_max) eligible.push_back(static_cast<int>(i));
  }
  std::stable_sort(eligible.begin(), eligible.end(), [&](int x, int y) {
    return states[x].S_bar * states[x].U > states[y].S_bar * states[y].U;
  });
  const int room = std::max(cfg.budget - TotalRank(states), 0);
  const int take =
      std::min({cfg.top_h, room, static_cast<int>(eligible.size())});
  std::vector<int> promoted(eligible.begin(), eligible.begin() + take);
  std::sort(promoted.begin(), promoted.end());
  for (int i : promoted) Promote(states[i], cfg, rng);
  std::vector<int> ids;
  for (int i : promoted) ids.push_back(states[i].id);
  return ids;
}

std::vector<int> uniform_grow_step(std::vector<ModuleState>& states,
                                   const DiscoveryConfig& cfg, int& cursor,
                                   Rng& rng) {
  const int M = static_cast<int>(states.size());
  int room = std::max(cfg.budget - TotalRank(states), 0);
  std::vector<int> ids;
  int step = 1;
  while (step <= M && room > 0 && static_cast<int>(ids.size()) < cfg.top_h) {
    const int i = (cursor + step) % M;
    if (states[i].r < cfg.r_max) {
      Promote(states[i], cfg, rng);
      ids.push_back(states[i].id);
      --room;
      cursor = i;
      step = 1;
    } else {
      ++step;
    }
  }
  return ids;
}

double orth_penalty(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                    double lambda, int n_layers) {
  if (n_layers < 1) throw Error(ErrorKind::kParameter, "n_layers must be >= 1");
  if (lambda == 0.0) return 0.0;
  const Eigen::MatrixXd AtA = A.transpose() * A;
  const Eigen::MatrixXd BBt = B * B.transpose();
  const double pa =
      (AtA - Eigen::MatrixXd::Identity(AtA.rows(), AtA.cols())).norm();
  const double pb =
      (BBt - Eigen::MatrixXd::Identity(BBt.rows(), BBt.cols())).norm();
  return lambda * (pa + pb) / (2.0 * n_layers);
}

double train_module_round(ModuleState& state,
                          const std::vector<std::vector<int>>& batches,
                          const Rank1Config& rank1,
                          const std::vector<int>& order) {
  const int r = state.r;
  const ProblemInstance& inst = state.instance;
  state.snapshot = state.committed;
  double importance = 0.0;
  for (const std::vector<int>& idx : batches) {
    const Eigen::MatrixXd Xb = Columns(inst.X, idx);
    const Eigen::MatrixXd Yb = Columns(inst.Y, idx);
    const GramSystem gram(Xb);

    // Importance from each component's own deflation loss (snapshot prefix
    // plus the component) at the pre-update parameters.
    if (r > 0) {
      Eigen::VectorXd theta(r * (inst.d + inst.m));
      Eigen::VectorXd grads(theta.size());
      Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(inst.m, Xb.cols());
      Eigen::Index off = 0;
      for (int k = 0; k < r; ++k) {
        const ComponentPair& p = state.committed[k];
        const Eigen::MatrixXd R =
            Yb - prefix - p.b * (p.a.transpose() * Xb);
        theta.segment(off, inst.d) = p.a;
        grads.segment(off, inst.d) = -Xb * (R.transpose() * p.b);
        off += inst.d;
        theta.segment(off, inst.m) = p.b;
        grads.segment(off, inst.m) = -R * (Xb.transpose() * p.a);
        off += inst.m;
        const ComponentPair& q = state.snapshot[k];
        prefix.noalias() += q.b * (q.a.transpose() * Xb);
      }
      importance += raw_importance(theta, grads).value;
    }

    const Eigen::MatrixXd N0 = Yb * Xb.transpose();
    for (int k : order) {
      if (k < 1 || k > r + 1) {
        throw Error(ErrorKind::kParameter, "update order out of range");
      }
      Eigen::MatrixXd N = N0;
      Eigen::MatrixXd target = Yb;
      for (int j = 0; j < k - 1; ++j) {
        const ComponentPair& p = state.snapshot[j];
        N.noalias() -= p.b * (gram.M() * p.a).transpose();
        target.noalias() -= p.b * (p.a.transpose() * Xb);
      }
      ComponentPair& slot = k <= r ? state.committed[k - 1] : state.reserve;
      slot = run_rank1(gram, N, target.squaredNorm(), rank1, slot);
    }
  }
  return importance / static_cast<double>(batches.size());
}

DiscoveryResult adapad_train(const DiscoveryConfig& cfg) {
  validate(cfg);
  const int M = cfg.modules();
  const Rng root(cfg.seed);
  Rng init_rng = root.Split(1);
  Rng grow_rng = root.Split(2);
  Rng batch_rng = root.Split(3);

  DiscoveryResult out;
  std::vector<ModuleState> states(M);
  for (int i = 0; i < M; ++i) {
    ModuleState& s = states[i];
    s.id = i;
    s.instance = generate_instance(cfg.m, cfg.d, cfg.n, cfg.true_ranks[i],
                                   cfg.profile, cfg.noise_level,
                                   cfg.seed * 1000 + i + 1, cfg.whiten_x);
    s.committed.push_back(RandomPair(cfg.d, cfg.m, cfg.init_scale, init_rng));
    s.reserve = RandomPair(cfg.d, cfg.m, cfg.init_scale, init_rng);
    s.r = 1;
  }

  // states_by_round[l][i]: committed pairs followed by the reserve.
  std::vector<std::vector<std::vector<ComponentPair>>> states_by_round;
  std::vector<std::vector<int>> commit_round(M, std::vector<int>{1});
  auto record = [&]() {
    std::vector<std::vector<ComponentPair>> row(M);
    std::vector<int> ranks(M);
    std::vector<double> errs(M);
    double num = 0.0, den = 0.0, pen = 0.0;
    for (int i = 0; i < M; ++i) {
      const ModuleState& s = states[i];
      row[i] = s.committed;
      row[i].push_back(s.reserve);
      ranks[i] = s.r;
      errs[i] = RelError(s.instance, s.committed);
      const double ref = s.instance.W_star.norm();
      num += errs[i] * errs[i] * ref * ref;
      den += ref * ref;
      Eigen::MatrixXd A(cfg.d, s.r), B(s.r, cfg.m);
      for (int k = 0; k < s.r; ++k) {
        A.col(k) = s.committed[k].a;
        B.row(k) = s.committed[k].b.transpose();
      }
      pen += orth_penalty(A, B, cfg.lambda_orth, M);
    }
    states_by_round.push_back(std::move(row));
    out.ranks.push_back(ranks);
    out.module_errors.push_back(errs);
    out.total_error.push_back(den > 0 ? std::sqrt(num / den) : 0.0);
    out.orth_penalty.push_back(pen);
  };
  record();
  out.promotions.emplace_back();
  out.raw_importance.emplace_back(M, 0.0);
  out.scores.emplace_back(M, 0.0);

  std::vector<int> order_buf;
  int cursor = -1;
  for (int l = 1; l <= cfg.rounds; ++l) {
    const std::vector<std::vector<int>> batches =
        DrawBatches(cfg.n, cfg.batches, cfg.batch_size, batch_rng);
    std::vector<double> raw(M), score(M);
    for (int i = 0; i < M; ++i) {
      ModuleState& s = states[i];
      order_buf.resize(s.r + 1);
      std::iota(order_buf.begin(), order_buf.end(), 1);
      raw[i] = train_module_round(s, batches, cfg.rank1, order_buf);
      const EmaState e = update_ema(s.S_bar, s.U, raw[i], cfg.beta1,
                                    cfg.beta2, cfg.pre_update_volatility);
      s.S_bar = e.S_bar;
      s.U = e.U;
      score[i] = s.S_bar * s.U;
    }
    out.raw_importance.push_back(raw);
    out.scores.push_back(score);
    std::vector<int> promoted;
    if (l > cfg.warmup_rounds && TotalRank(states) < cfg.budget) {
      promoted = cfg.growth == GrowthRule::kScored
                     ? grow_step(states, cfg, grow_rng)
                     : uniform_grow_step(states, cfg, cursor, grow_rng);
    }
    for (int i : promoted) commit_round[i].push_back(l);
    out.promotions.push_back(promoted);
    if (TotalRank(states) > cfg.budget) {
      throw Error(ErrorKind::kConfig, "rank budget exceeded");
    }
    record();
  }

  for (int i = 0; i < M; ++i) {
    const ModuleState& s = states[i];
    out.final_ranks.push_back(s.r);
    out.final_scores.push_back({s.S_bar, s.U});
    DeflationRun run;
    run.regime = Regime::kParallel;
    run.m = cfg.m;
    run.d = cfg.d;
    run.r = s.r;
    run.rounds = cfg.rounds;
    // Slot k counts as committed from the round at whose end it was
    // promoted (round 1 for the initial component).
    run.activation = commit_round[i];
    run.history.resize(cfg.rounds + 1);
    for (int l = 0; l <= cfg.rounds; ++l) {
      const std::vector<ComponentPair>& row = states_by_round[l][i];
      for (int k = 1; k <= s.r; ++k) {
        if (k <= static_cast<int>(row.size())) {
          run.history[l].push_back(row[k - 1]);
        } else {
          run.history[l].push_back({Eigen::VectorXd::Zero(cfg.d),
                                    Eigen::VectorXd::Zero(cfg.m)});
        }
      }
    }
    run.work_units =
        static_cast<long long>(cfg.rounds) * cfg.batches * cfg.rank1.inner_iters;
    out.runs.push_back(std::move(run));
    out.instances.push_back(s.instance);
  }
  return out;
}

}  // namespace deflate
