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

#ifndef DEFLATE_EXPERIMENTS_H_
#define DEFLATE_EXPERIMENTS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "deflate/discovery.h"
#include "deflate/rank1.h"
#include "deflate/trace_io.h"
#include "json.hpp"

namespace deflate {

enum class Experiment {
  kConvergence,
  kSelfCorrection,
  kNoise,
  kBounds,
  kGapSweep,
  kDiscover,
  kScaling,
  kVerify,
};

Experiment ParseExperiment(const std::string& name);
std::string ExperimentName(Experiment e);

struct RunConfig {
  Experiment experiment = Experiment::kConvergence;
  int m = 100;
  int d = 200;
  int n = 500;
  int r_star = 10;
  // Components extracted; 0 means r_star.
  int rank = 0;
  std::vector<std::string> profiles = {"exp"};
  Rank1Config::Method method = Rank1Config::Method::kAls;
  int inner_iters = 10;
  int rounds = 10;
  double Q = kInfinity;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> noise;
  std::vector<double> gaps;
  std::vector<int> workers = {1};
  bool advance_learning = false;
  bool whiten_x = false;
  // Contraction probe trials per component (bounds, verify).
  int probe_trials = 20;
  DiscoveryConfig discovery;
  std::string out_dir = "out";
  Format format = Format::kCsv;

  int components() const { return rank > 0 ? rank : r_star; }
};

// Defaults of each experiment family (the synthetic setups it reproduces).
RunConfig default_config(Experiment e);

// Throws kConfig with a description of the first invalid field.
void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
// Overlays the members present in `j` on `base`; unknown keys are errors.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  Experiment experiment = Experiment::kConvergence;
  // per_seed[i] holds the trace rows of config.seeds[i].
  std::vector<std::vector<TraceRow>> per_seed;
  std::vector<Table> tables;
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  double seconds = 0.0;

  bool passed() const;
};

ExperimentResult run_experiment(const RunConfig& config);

struct RunReport {
  std::vector<std::string> files;
  nlohmann::json metadata;
};

// Writes one trace file per seed, the aggregate file and any auxiliary
// tables under config.out_dir.
RunReport write_report(const RunConfig& config, const ExperimentResult& result);

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace deflate

#endif  // DEFLATE_EXPERIMENTS_H_
