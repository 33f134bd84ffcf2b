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

// deflate_lab: runs one experiment family, writes its traces and prints the
// acceptance checks. Exit codes: 0 all checks pass, 2 a check missed,
// 1 error.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deflate/errors.h"
#include "deflate/experiments.h"
#include "json.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::vector<uint64_t> seeds;
  std::optional<int> m, d, n, rank, rounds, inner_iters;
  std::optional<std::string> profile, q, out, format;
  std::vector<double> noise, gaps;
  std::vector<int> workers;
};

void AddFlags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", f.seeds, "seed (repeatable)")->take_all();
  app->add_option("--m", f.m, "output dimension");
  app->add_option("--d", f.d, "input dimension");
  app->add_option("--n", f.n, "sample count");
  app->add_option("--rank", f.rank, "true rank r*");
  app->add_option("--rounds", f.rounds, "rounds L");
  app->add_option("--inner-iters", f.inner_iters, "rank-1 iterations T");
  app->add_option("--profile", f.profile, "spectral profile")
      ->check(CLI::IsMember({"exp", "power", "uniform", "lingap"}));
  app->add_option("--noise", f.noise, "noise level (repeatable)")->take_all();
  app->add_option("--gap", f.gaps, "gap ratio g / sigma_1 (repeatable)")
      ->take_all();
  app->add_option("--workers", f.workers, "worker threads P (repeatable)")
      ->take_all();
  app->add_option("--q", f.q, "projection radius in units of sigma_1, or inf");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--format", f.format, "trace format")
      ->check(CLI::IsMember({"csv", "json"}));
}

deflate::RunConfig Resolve(deflate::Experiment e, const Flags& f) {
  using deflate::Error;
  using deflate::ErrorKind;
  deflate::RunConfig c = deflate::default_config(e);
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::kConfig, f.config_path + ": " + ex.what());
    }
    if (j.contains("experiment") &&
        deflate::ParseExperiment(j["experiment"].get<std::string>()) != e) {
      throw Error(ErrorKind::kConfig,
                  f.config_path + " names a different experiment");
    }
    c = deflate::apply_json(c, j);
  }
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.m) c.m = *f.m;
  if (f.d) c.d = *f.d;
  if (f.n) c.n = *f.n;
  if (f.rank) c.r_star = *f.rank;
  if (f.rounds) c.rounds = *f.rounds;
  if (f.inner_iters) c.inner_iters = *f.inner_iters;
  if (f.profile) c.profiles = {*f.profile};
  if (!f.noise.empty()) c.noise = f.noise;
  if (!f.gaps.empty()) c.gaps = f.gaps;
  if (!f.workers.empty()) c.workers = f.workers;
  if (f.q) {
    if (*f.q == "inf") {
      c.Q = deflate::kInfinity;
    } else {
      try {
        size_t used = 0;
        c.Q = std::stod(*f.q, &used);
        if (used != f.q->size()) throw std::invalid_argument(*f.q);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kConfig, "--q expects inf or a number");
      }
    }
  }
  if (f.out) c.out_dir = *f.out;
  if (f.format) c.format = deflate::ParseFormat(*f.format);
  if (e == deflate::Experiment::kDiscover) {
    // Dimension flags describe each module of the stack.
    if (f.m) c.discovery.m = *f.m;
    if (f.d) c.discovery.d = *f.d;
    if (f.n) c.discovery.n = *f.n;
    if (f.rounds) c.discovery.rounds = *f.rounds;
    if (f.inner_iters) c.discovery.rank1.inner_iters = *f.inner_iters;
  }
  return c;
}

const char* Describe(deflate::Experiment e) {
  switch (e) {
    case deflate::Experiment::kConvergence:
      return "parallel vs sequential error per profile";
    case deflate::Experiment::kSelfCorrection:
      return "target mismatch decay for workers 2-4";
    case deflate::Experiment::kNoise:
      return "noise floors of both methods";
    case deflate::Experiment::kBounds:
      return "fitted decay rates and warm-up vs the rate recurrence";
    case deflate::Experiment::kGapSweep:
      return "convergence across linear spectral gaps";
    case deflate::Experiment::kDiscover:
      return "rank discovery on a multi-module stack";
    case deflate::Experiment::kScaling:
      return "per-round wall clock over worker counts";
    case deflate::Experiment::kVerify:
      return "invariant and property suite";
  }
  return "";
}

int Run(deflate::Experiment e, const Flags& f) {
  const deflate::RunConfig config = Resolve(e, f);
  deflate::validate(config);
  const deflate::ExperimentResult result = deflate::run_experiment(config);
  const deflate::RunReport report = deflate::write_report(config, result);
  std::printf("%s: %.2f s\n", deflate::ExperimentName(e).c_str(), result.seconds);
  for (const std::string& note : result.notes) std::printf("  note: %s\n", note.c_str());
  for (const deflate::CheckResult& c : result.checks) {
    std::printf("  %s  %s  (%s)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str());
  }
  for (const std::string& path : report.files) std::printf("  wrote %s\n", path.c_str());
  return result.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel rank-1 deflation lab"};
  app.require_subcommand(1);
  const std::vector<deflate::Experiment> all = {
      deflate::Experiment::kConvergence, deflate::Experiment::kSelfCorrection,
      deflate::Experiment::kNoise,       deflate::Experiment::kBounds,
      deflate::Experiment::kGapSweep,    deflate::Experiment::kDiscover,
      deflate::Experiment::kScaling,     deflate::Experiment::kVerify};
  Flags flags;
  std::vector<std::pair<CLI::App*, deflate::Experiment>> subs;
  for (deflate::Experiment e : all) {
    CLI::App* sub = app.add_subcommand(deflate::ExperimentName(e), Describe(e));
    AddFlags(sub, flags);
    subs.emplace_back(sub, e);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    for (const auto& [sub, e] : subs) {
      if (sub->parsed()) return Run(e, flags);
    }
  } catch (const deflate::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
