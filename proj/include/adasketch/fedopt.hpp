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

#ifndef ADASKETCH_FEDOPT_HPP_
#define ADASKETCH_FEDOPT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adasketch/privacy.hpp"
#include "adasketch/secagg.hpp"

namespace adasketch {

// FedAvg harness with pluggable mean estimation on synthetic desk-scale
// tasks. Every source of randomness flows from per-(round, purpose) streams
// of one master seed, so runs are identical regardless of thread count.

enum class TaskKind { kLinearRegression, kLogisticRegression };

struct ClientData {
  std::vector<double> features;  // samples x dim, row-major
  std::vector<double> labels;    // {0,1} for logistic, real for linear
  int samples = 0;
};

struct Task {
  TaskKind kind = TaskKind::kLinearRegression;
  int dim = 0;
  std::vector<ClientData> clients;
  ClientData validation;

  // Linear regression with decaying update norms as the model approaches
  // the planted target.
  static Task synthetic_linear(int num_clients, int samples_per_client,
                               int dim, double label_noise,
                               std::uint64_t seed);
  // Logistic regression with a k-sparse planted separator.
  static Task synthetic_sparse_logistic(int num_clients,
                                        int samples_per_client, int dim,
                                        int sparsity, double target_norm,
                                        std::uint64_t seed);
};

// Loss for linear, accuracy for logistic.
double evaluate(const Task& task, const ClientData& data,
                std::span<const double> model);
double loss(const Task& task, const ClientData& data,
            std::span<const double> model);

enum class MeanEstimator {
  kExact,
  kDpUncompressed,
  kFixedSketch,
  kAdaptNorm,
  kTwoStage,
  kAdaptTail,
};

enum class TailUpdateRule { kMultSign, kMultError, kLinear };

struct FlConfig {
  int rounds = 300;            // K
  int clients_per_round = 50;  // n
  double noise_multiplier = 0.2;
  double clip_bound = 1.0;     // B
  double c0 = 0.1;             // relative compression-error constant
  int warmup_rounds = 75;      // W, two-stage only
  double eta = 0.2;            // adapt-tail multiplicative step
  TailUpdateRule tail_rule = TailUpdateRule::kMultSign;
  double server_lr = 1.0;
  double server_momentum = 0.9;
  double client_lr = 0.1;
  int local_steps = 5;
  MeanEstimator estimator = MeanEstimator::kExact;
  int initial_cols = 2;      // C_1
  double fixed_rate = 8.0;   // fixed-sketch target compression rate
  double l1_zero_threshold = 0.0;  // 0 disables the high-l1 filter
  SecAggMode secagg_mode = SecAggMode::kIdeal;
  FieldConfig field;

  void validate(int dim) const;
};

struct RoundLog {
  int round = 0;
  int cols = 0;  // C_j; 0 marks an uncompressed round
  long first_scalars = 0;
  long second_scalars = 0;
  double stat_estimate = 0.0;  // n-hat_j or e-tilde_j; NaN when unused
  double train_metric = 0.0;
  double val_metric = 0.0;
  double update_norm = 0.0;  // norm of the applied mean estimate
  double sketch_noise_std = 0.0;
  double scalar_noise_std = 0.0;
};

struct FlResult {
  std::vector<RoundLog> logs;
  std::vector<double> model;
  // Divergence aborts the run; logs up to the failing round are kept.
  bool diverged = false;
  std::string diagnostic;
};

// Sketch shape used by all FL estimators: R = P = P~ = ceil(ln d), R~ = 1,
// C~ = 2.
struct FlSketchShape {
  int rows;
  int pads;
  int second_pads;
  int second_cols;
  int max_cols;  // never exceed the uncompressed size
};
FlSketchShape fl_sketch_shape(int dim);

// Next first-sketch width from a private norm estimate:
// ceil((max(n_hat,0) + sqrt(20) sigma B / n)^2 / (c0 P B^2 sigma^2)),
// clamped to [2, max_cols].
long fl_cols_from_norm(double norm_estimate, const FlConfig& cfg,
                       const FlSketchShape& shape);

FlResult fedavg_run(const Task& task, const FlConfig& cfg, std::uint64_t seed);

// Local training (full-batch gradient steps); returns the model delta.
std::vector<double> local_update(const Task& task, const ClientData& client,
                                 std::span<const double> model,
                                 double client_lr, int steps);

const char* estimator_name(MeanEstimator estimator);

}  // namespace adasketch

#endif  // ADASKETCH_FEDOPT_HPP_
