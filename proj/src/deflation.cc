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

#include "deflate/deflation.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <string>

#include "deflate/errors.h"
#include "deflate/random.h"

namespace deflate {
namespace {

// What a component publishes each round. M a is carried along so that
// successors can form N_k = Y X^T - sum_{k'<k} b_k' (M a_k')^T cheaply.
struct Slot {
  ComponentPair pair;
  Eigen::VectorXd Ma;
};

ComponentPair ProjectWithGram(ComponentPair pair, const GramSystem& gram,
                              double Q) {
  if (!std::isfinite(Q)) return pair;
  const double norm = product_norm(gram, pair);
  if (norm > Q) pair.b *= Q / norm;
  return pair;
}

std::string Where(int k, int round) {
  return "component " + std::to_string(k) + ", round " +
         std::to_string(round) + ": ";
}

std::exception_ptr WithContext(int k, int round) {
  try {
    throw;
  } catch (const DivergenceError& e) {
    return std::make_exception_ptr(
        DivergenceError(Where(k, round) + e.detail(), e.iterate(), e.step()));
  } catch (const Error& e) {
    return std::make_exception_ptr(
        Error(e.kind(), Where(k, round) + e.detail()));
  } catch (...) {
    return std::current_exception();
  }
}

}  // namespace

Eigen::MatrixXd ExactTargets::product(int k) const {
  const SvdTriplet& t = components[k - 1];
  return t.sigma * t.u * t.v.transpose();
}

ExactTargets exact_sequential_targets(const Eigen::MatrixXd& Y, int r) {
  const int p = static_cast<int>(std::min(Y.rows(), Y.cols()));
  if (r < 0 || r > p) {
    throw Error(ErrorKind::kDimension, "r exceeds min(rows, cols) of Y");
  }
  const std::vector<SvdTriplet> trip = top_svd(Y, std::min(r + 1, p));
  const double top = trip.empty() ? 0.0 : trip[0].sigma;
  for (int k = 0; k < r; ++k) {
    const double next = k + 1 < static_cast<int>(trip.size())
                            ? trip[k + 1].sigma
                            : 0.0;
    if (!(trip[k].sigma - next >= 1e-8 * top) || top == 0.0) {
      throw Error(ErrorKind::kDegenerateGap,
                  "singular values " + std::to_string(k + 1) + " and " +
                      std::to_string(k + 2) + " are not separated");
    }
  }
  ExactTargets out;
  out.components.assign(trip.begin(), trip.begin() + r);
  out.targets.reserve(r + 1);
  out.targets.push_back(Y);
  for (int k = 1; k <= r; ++k) {
    out.targets.push_back(out.targets.back() - out.product(k));
  }
  return out;
}

void serial_dispatch(int r, const std::function<void(int)>& work) {
  for (int k = 1; k <= r; ++k) work(k);
}

DeflationRun run_deflation_engine(const ProblemInstance& instance,
                                  const ParallelConfig& cfg, Regime regime,
                                  const std::vector<int>& budgets,
                                  const RoundDispatcher& dispatch,
                                  std::vector<double>* round_seconds) {
  const int r = cfg.r;
  if (r < 0) throw Error(ErrorKind::kParameter, "r must be >= 0");
  if (cfg.rank1.inner_iters < 1) {
    throw Error(ErrorKind::kParameter, "inner iterations must be >= 1");
  }
  if (!(cfg.Q > 0)) throw Error(ErrorKind::kParameter, "Q must be positive");

  DeflationRun run;
  run.regime = regime;
  run.r = r;
  run.m = instance.m;
  run.d = instance.d;

  if (std::isfinite(cfg.Q)) {
    const double sigma1 = instance.sigma_scale;
    if (cfg.Q < sigma1 * (1.0 - 1e-12)) {
      throw Error(ErrorKind::kParameter,
                  "Q must be at least sigma*_1 = " + std::to_string(sigma1));
    }
    if (cfg.Q < 2.0 * sigma1) {
      run.warnings.push_back("Q below 2 sigma*_1; convergence theory assumes "
                             "Q >= 2 sigma*_1");
    }
  }

  if (regime == Regime::kSequential) {
    if (static_cast<int>(budgets.size()) != r) {
      throw Error(ErrorKind::kParameter, "need one budget per component");
    }
    for (int T : budgets) {
      if (T < 1) throw Error(ErrorKind::kParameter, "budgets must be >= 1");
    }
    run.rounds = r;
    run.activation.resize(r);
    for (int k = 0; k < r; ++k) run.activation[k] = k + 1;
    for (int T : budgets) run.work_units += T;
  } else {
    run.rounds = cfg.rounds;
    if (cfg.activation.empty()) {
      run.activation.resize(r);
      for (int k = 0; k < r; ++k) run.activation[k] = k + 1;
    } else {
      if (static_cast<int>(cfg.activation.size()) != r) {
        throw Error(ErrorKind::kSchedule, "activation needs r entries");
      }
      run.activation = cfg.activation;
    }
    for (int s : run.activation) {
      if (s < 1) throw Error(ErrorKind::kSchedule, "activation rounds are >= 1");
      if (s > cfg.rounds) {
        throw Error(ErrorKind::kSchedule,
                    "rounds L = " + std::to_string(cfg.rounds) +
                        " below activation round " + std::to_string(s));
      }
    }
    run.work_units = static_cast<long long>(cfg.rounds) * cfg.rank1.inner_iters;
  }

  const GramSystem gram(instance.X);
  const Eigen::MatrixXd& X = instance.X;
  const Eigen::MatrixXd YXt = instance.Y * X.transpose();
  const double y_sq = instance.Y.squaredNorm();
  const bool need_sq = cfg.rank1.method == Rank1Config::Method::kGd;

  Rng base(cfg.seed, 0x64656672ULL);
  std::vector<Rng> worker_rng;
  std::vector<ComponentPair> state(r);
  std::vector<Slot> prev(r);
  worker_rng.reserve(r);
  for (int k = 0; k < r; ++k) {
    worker_rng.push_back(base.Split(k));
    state[k].a = worker_rng[k].GaussianVector(instance.d, cfg.init_scale);
    state[k].b = worker_rng[k].GaussianVector(instance.m, cfg.init_scale);
    prev[k].pair = state[k];
    prev[k].Ma = gram.M() * state[k].a;
  }
  run.history.reserve(run.rounds + 1);
  run.history.emplace_back(state);
  if (cfg.materialize_targets) run.targets.emplace_back();

  std::vector<int> reinit(r, 0);
  for (int round = 1; round <= run.rounds; ++round) {
    std::vector<Slot> next = prev;
    std::vector<std::exception_ptr> errors(r);
    std::vector<Eigen::MatrixXd> targets(cfg.materialize_targets ? r : 0);

    auto work = [&](int k1) {
      const int k = k1 - 1;
      try {
        const int s = run.activation[k];
        const bool active = round >= s;
        const bool update = regime == Regime::kSequential
                                ? round == s
                                : active || cfg.advance_learning;
        if (cfg.materialize_targets) {
          Eigen::MatrixXd Yk = instance.Y;
          for (int j = 0; j < k; ++j) {
            Yk.noalias() -= prev[j].pair.b *
                            (X.transpose() * prev[j].pair.a).transpose();
          }
          targets[k] = std::move(Yk);
        }
        if (!update) return;

        Eigen::MatrixXd N = YXt;
        for (int j = 0; j < k; ++j) {
          N.noalias() -= prev[j].pair.b * prev[j].Ma.transpose();
        }
        double target_sq = 0.0;
        if (need_sq) {
          // ||Y - sum_j b_j a_j^T X||^2 expanded through the Gram matrix.
          target_sq = y_sq;
          for (int i = 0; i < k; ++i) {
            target_sq -= 2.0 * prev[i].pair.b.dot(YXt * prev[i].pair.a);
            for (int j = 0; j < k; ++j) {
              target_sq += prev[i].pair.b.dot(prev[j].pair.b) *
                           prev[i].pair.a.dot(prev[j].Ma);
            }
          }
          target_sq = std::max(target_sq, 0.0);
        }
        Rank1Config rc = cfg.rank1;
        if (regime == Regime::kSequential) rc.inner_iters = budgets[k];

        ComponentPair result;
        try {
          result = run_rank1(gram, N, target_sq, rc, state[k]);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kWarmStart) throw;
          ComponentPair fresh = state[k];
          fresh.a = worker_rng[k].GaussianVector(instance.d, 1.0);
          ++reinit[k];
          result = run_rank1(gram, N, target_sq, rc, std::move(fresh));
        }
        result = ProjectWithGram(std::move(result), gram, cfg.Q);
        state[k] = result;
        if (active) {
          next[k].Ma = gram.M() * result.a;
          next[k].pair = std::move(result);
        }
      } catch (...) {
        errors[k] = WithContext(k1, round);
      }
    };

    const auto start = std::chrono::steady_clock::now();
    dispatch(r, work);
    const auto stop = std::chrono::steady_clock::now();
    if (round_seconds != nullptr) {
      round_seconds->push_back(
          std::chrono::duration<double>(stop - start).count());
    }
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    std::vector<ComponentPair> published(r);
    for (int k = 0; k < r; ++k) published[k] = next[k].pair;
    run.history.push_back(std::move(published));
    if (cfg.materialize_targets) run.targets.push_back(std::move(targets));
    prev = std::move(next);
  }
  for (int c : reinit) run.reinitializations += c;
  return run;
}

DeflationRun sequential_deflate(const ProblemInstance& instance, int r,
                                const std::vector<int>& budgets,
                                const Rank1Config& rank1, uint64_t seed) {
  ParallelConfig cfg;
  cfg.r = r;
  cfg.rounds = r;
  cfg.rank1 = rank1;
  cfg.seed = seed;
  return run_deflation_engine(instance, cfg, Regime::kSequential, budgets,
                              serial_dispatch);
}

DeflationRun parallel_deflate(const ProblemInstance& instance,
                              const ParallelConfig& cfg) {
  return run_deflation_engine(instance, cfg, Regime::kParallel, {},
                              serial_dispatch);
}

ComponentPair project_frobenius(const ComponentPair& pair,
                                const Eigen::MatrixXd& X, double Q) {
  if (!(Q > 0)) throw Error(ErrorKind::kParameter, "Q must be positive");
  if (!std::isfinite(Q)) return pair;
  const double norm = pair.b.norm() * (X.transpose() * pair.a).norm();
  if (norm <= Q || norm == 0.0) return pair;
  ComponentPair out = pair;
  out.b *= Q / norm;
  return out;
}

Eigen::MatrixXd reconstruct_weight(const DeflationRun& run, int round) {
  if (round < 0 || round > run.rounds) {
    throw Error(ErrorKind::kParameter, "round out of range");
  }
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(run.m, run.d);
  for (int k = 1; k <= run.r; ++k) {
    if (!run.committed(k, round)) continue;
    const ComponentPair& p = run.pair(k, round);
    W.noalias() += p.b * p.a.transpose();
  }
  return W;
}

}  // namespace deflate
