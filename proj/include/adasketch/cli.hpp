// Copyright 2026 The adasketch Authors
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

#ifndef ADASKETCH_CLI_HPP_
#define ADASKETCH_CLI_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adasketch/config.hpp"
#include "adasketch/fedopt.hpp"
#include "adasketch/fme.hpp"

namespace adasketch {

// Experiment driver: config parsing, run orchestration, CSV emission.
// Runs for a fixed (config, seed) pair produce byte-identical output.

struct FmeInstanceSpec {
  std::string kind = "constant";  // constant | perturbed
  double mean_norm = 0.5;         // norm of the true mean
  int sparsity = 0;               // 0 = dense random direction
  int pool = 0;                   // 0 = derived from the protocol's needs
  double spread = 0.0;            // perturbed: per-client deviation scale
  std::uint64_t data_seed = 1;
};

struct TaskSpec {
  std::string kind = "sparse-logistic";  // sparse-logistic | linear
  int clients = 300;
  int samples = 40;
  int dim = 200;
  int sparsity = 10;
  double target_norm = 3.0;
  double label_noise = 0.25;
  std::uint64_t data_seed = 1;
};

struct ExperimentConfig {
  enum class Mode { kFme, kFedopt, kSweep };
  Mode mode = Mode::kFme;
  std::vector<std::uint64_t> seeds{1};
  std::string output_path;  // empty: caller-provided stream only

  FmeConfig fme;
  FmeInstanceSpec instance;
  FlConfig fl;
  TaskSpec task;

  // Sweep axes (empty = single point from the base config).
  std::vector<double> sweep_c0;
  std::vector<double> sweep_noise;
  bool genie = false;
  double genie_delta = 0.01;         // relative utility drop allowance
  std::vector<double> genie_rates;   // default 2^0 .. 2^13
};

// Throws ConfigError listing offending keys on schema violations.
ExperimentConfig parse_experiment(const ConfigFile& file);

std::vector<std::vector<double>> build_fme_pool(const FmeInstanceSpec& spec,
                                                const FmeConfig& cfg,
                                                std::vector<double>* pool_mean);
Task build_task(const TaskSpec& spec);

extern const char kFmeCsvHeader[];
extern const char kFedoptCsvHeader[];
extern const char kSweepCsvHeader[];

void run_fme_mode(const ExperimentConfig& cfg, std::ostream& out);
void run_fedopt_mode(const ExperimentConfig& cfg, std::ostream& out);
void run_sweep_mode(const ExperimentConfig& cfg, std::ostream& out);
void run_experiment(const ExperimentConfig& cfg, std::ostream& out);

// Highest compression rate whose (log2-rate interpolated) accuracy stays
// within a relative drop of delta from the baseline. rates ascending.
struct GenieSelection {
  double rate = 1.0;
  bool feasible = false;
};
GenieSelection genie_select(std::span<const double> rates,
                            std::span<const double> accuracies,
                            double baseline, double delta);

// Shortest round-trip decimal form; identical bytes across runs.
std::string format_double(double v);

// Fast subset of the invariant suite; returns 0 on success.
int run_selftest(std::ostream& out);

}  // namespace adasketch

#endif  // ADASKETCH_CLI_HPP_
