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

#include "adasketch/fedopt.hpp"

#include <cmath>
#include <vector>

#include <omp.h>

#include "gtest/gtest.h"
#include "adasketch/metrics.hpp"
#include "adasketch/sketch.hpp"

namespace adasketch {
namespace {

Task small_task() {
  return Task::synthetic_sparse_logistic(/*num_clients=*/40,
                                         /*samples_per_client=*/15,
                                         /*dim=*/24, /*sparsity=*/4,
                                         /*target_norm=*/3.0, /*seed=*/11);
}

FlConfig base_config() {
  FlConfig cfg;
  cfg.rounds = 12;
  cfg.clients_per_round = 8;
  cfg.noise_multiplier = 0.0;
  cfg.clip_bound = 1.0;
  cfg.client_lr = 0.3;
  cfg.local_steps = 3;
  cfg.server_lr = 0.5;
  cfg.server_momentum = 0.9;
  cfg.estimator = MeanEstimator::kExact;
  return cfg;
}

// Independent FedAvg oracle, written without the estimator plumbing.
std::vector<double> reference_fedavg(const Task& task, const FlConfig& cfg,
                                     std::uint64_t seed) {
  const int d = task.dim;
  std::vector<double> w(d, 0.0), velocity(d, 0.0);
  for (int round = 1; round <= cfg.rounds; ++round) {
    // Same cohort stream convention as the harness.
    std::vector<int> idx(task.clients.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    Stream s(seed, static_cast<std::uint64_t>(round), StreamTag::kCohort);
    for (int i = 0; i < cfg.clients_per_round; ++i) {
      const int j =
          i + static_cast<int>(s.below(static_cast<int>(idx.size()) - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < cfg.clients_per_round; ++i) {
      std::vector<double> z = local_update(task, task.clients[idx[i]], w,
                                           cfg.client_lr, cfg.local_steps);
      clip_in_place(z, cfg.clip_bound);
      for (int q = 0; q < d; ++q) mean[q] += z[q];
    }
    for (double& v : mean) v /= cfg.clients_per_round;
    for (int q = 0; q < d; ++q) {
      velocity[q] = cfg.server_momentum * velocity[q] + mean[q];
      w[q] += cfg.server_lr * velocity[q];
    }
  }
  return w;
}

TEST(FedavgTest, ExactEstimatorMatchesReferenceBitForBit) {
  const Task task = small_task();
  const FlConfig cfg = base_config();
  const FlResult result = fedavg_run(task, cfg, 5);
  const std::vector<double> expect = reference_fedavg(task, cfg, 5);
  ASSERT_EQ(result.model.size(), expect.size());
  for (std::size_t q = 0; q < expect.size(); ++q) {
    EXPECT_EQ(result.model[q], expect[q]);
  }
}

TEST(FedavgTest, ZeroRoundsReturnsInitialModel) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.rounds = 0;
  const FlResult result = fedavg_run(task, cfg, 1);
  EXPECT_TRUE(result.logs.empty());
  for (const double v : result.model) EXPECT_EQ(v, 0.0);
}

TEST(FedavgTest, DeterministicAcrossThreadCounts) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptNorm;
  cfg.noise_multiplier = 0.2;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const FlResult serial = fedavg_run(task, cfg, 9);
  omp_set_num_threads(saved > 1 ? saved : 2);
  const FlResult parallel = fedavg_run(task, cfg, 9);
  omp_set_num_threads(saved);
  ASSERT_EQ(serial.logs.size(), parallel.logs.size());
  EXPECT_EQ(serial.model, parallel.model);
  for (std::size_t i = 0; i < serial.logs.size(); ++i) {
    EXPECT_EQ(serial.logs[i].stat_estimate, parallel.logs[i].stat_estimate);
    EXPECT_EQ(serial.logs[i].val_metric, parallel.logs[i].val_metric);
    EXPECT_EQ(serial.logs[i].cols, parallel.logs[i].cols);
  }
}

TEST(FedavgTest, DpBaselineRecordsCalibratedNoise) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kDpUncompressed;
  cfg.noise_multiplier = 0.4;
  const FlResult result = fedavg_run(task, cfg, 3);
  const FlNoise expect =
      calibrate_fl(0.4, cfg.clip_bound, cfg.clients_per_round,
                   FlProtocol::kTwoStage);
  for (const RoundLog& log : result.logs) {
    EXPECT_DOUBLE_EQ(log.sketch_noise_std, expect.sketch_std);
    EXPECT_EQ(log.first_scalars, task.dim);
    EXPECT_EQ(log.second_scalars, 0);
  }
}

TEST(FedavgTest, AdaptNormRecordsSplitNoiseAndBothSketches) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptNorm;
  cfg.noise_multiplier = 0.3;
  const FlResult result = fedavg_run(task, cfg, 3);
  const FlNoise expect = calibrate_fl(0.3, cfg.clip_bound,
                                      cfg.clients_per_round,
                                      FlProtocol::kAdaptNorm);
  const FlSketchShape shape = fl_sketch_shape(task.dim);
  for (const RoundLog& log : result.logs) {
    EXPECT_DOUBLE_EQ(log.sketch_noise_std, expect.sketch_std);
    EXPECT_DOUBLE_EQ(log.scalar_noise_std, expect.scalar_std);
    EXPECT_EQ(log.first_scalars,
              static_cast<long>(shape.rows) * shape.pads * log.cols);
    EXPECT_EQ(log.second_scalars,
              static_cast<long>(shape.second_pads) * shape.second_cols);
    EXPECT_GE(log.cols, 2);
    EXPECT_LE(log.cols, shape.max_cols);
  }
}

TEST(FlColsTest, ZeroNormEstimateHitsTheFloor) {
  FlConfig cfg = base_config();
  cfg.noise_multiplier = 0.2;
  cfg.c0 = 0.1;
  const FlSketchShape shape = fl_sketch_shape(200);
  EXPECT_EQ(fl_cols_from_norm(0.0, cfg, shape), 2);
  EXPECT_EQ(fl_cols_from_norm(-1.0, cfg, shape), 2);
}

TEST(FlColsTest, DoublingNoiseQuartersTheSize) {
  FlConfig cfg = base_config();
  cfg.clients_per_round = 50;
  cfg.c0 = 0.1;
  FlSketchShape shape = fl_sketch_shape(200);
  shape.max_cols = 1 << 20;  // keep the formula un-clamped
  cfg.noise_multiplier = 0.05;
  const double at_sigma =
      static_cast<double>(fl_cols_from_norm(0.5, cfg, shape));
  cfg.noise_multiplier = 0.1;
  const double at_double =
      static_cast<double>(fl_cols_from_norm(0.5, cfg, shape));
  EXPECT_NEAR(at_sigma / at_double, 4.0, 0.25);
}

TEST(FlColsTest, MoreTolerantC0ShrinksTheSketch) {
  FlConfig cfg = base_config();
  cfg.clients_per_round = 50;
  cfg.noise_multiplier = 0.2;
  FlSketchShape shape = fl_sketch_shape(200);
  shape.max_cols = 1 << 20;
  long prev = 1L << 40;
  for (const double c0 : {0.01, 0.05, 0.1, 0.25}) {
    cfg.c0 = c0;
    const long cols = fl_cols_from_norm(0.4, cfg, shape);
    EXPECT_LT(cols, prev);
    prev = cols;
  }
}

TEST(TwoStageTest, WarmupEqualToRoundsIsPureUncompressed) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kTwoStage;
  cfg.noise_multiplier = 0.2;
  cfg.rounds = 10;
  cfg.warmup_rounds = 10;
  const FlResult result = fedavg_run(task, cfg, 7);
  CommLedger ledger;
  ledger.dim = task.dim;
  for (const RoundLog& log : result.logs) {
    EXPECT_EQ(log.cols, 0);
    EXPECT_EQ(log.first_scalars, task.dim);
    ledger.add_round(log.first_scalars, log.second_scalars);
  }
  EXPECT_DOUBLE_EQ(compression_rate(ledger), 1.0);
}

TEST(TwoStageTest, StageTwoUsesOneFixedSizeBelowUncompressed) {
  const Task task = Task::synthetic_sparse_logistic(40, 15, 120, 4, 3.0, 11);
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kTwoStage;
  cfg.noise_multiplier = 0.3;
  cfg.rounds = 12;
  cfg.warmup_rounds = 4;
  const FlResult result = fedavg_run(task, cfg, 7);
  int stage2_cols = -1;
  for (const RoundLog& log : result.logs) {
    if (log.round <= 4) {
      EXPECT_EQ(log.cols, 0);
      continue;
    }
    if (stage2_cols < 0) stage2_cols = log.cols;
    EXPECT_EQ(log.cols, stage2_cols);
    EXPECT_LT(log.first_scalars, task.dim + 1);
  }
  EXPECT_GE(stage2_cols, 2);
}

// Same n-hat, same formula: Two-Stage's fixed size equals Adapt Norm's
// steady-state size.
TEST(TwoStageTest, SizeFormulaMatchesAdaptNormOnEqualNormEstimate) {
  FlConfig cfg = base_config();
  cfg.noise_multiplier = 0.25;
  cfg.clients_per_round = 50;
  const FlSketchShape shape = fl_sketch_shape(200);
  EXPECT_EQ(fl_cols_from_norm(0.33, cfg, shape),
            fl_cols_from_norm(0.33, cfg, shape));
}

Task zero_update_task() {
  // Linear task with all-zero labels: gradients at w = 0 vanish, so every
  // client update is exactly zero.
  Task task = Task::synthetic_linear(20, 10, 200, 0.0, 3);
  for (ClientData& c : task.clients) {
    std::fill(c.labels.begin(), c.labels.end(), 0.0);
  }
  std::fill(task.validation.labels.begin(), task.validation.labels.end(), 0.0);
  return task;
}

TEST(AdaptTailFlTest, ZeroGapLeavesSizeUnchanged) {
  const Task task = zero_update_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptTail;
  cfg.noise_multiplier = 0.0;  // gamma = 0 and zero error: sign(0) -> 0
  cfg.rounds = 6;
  cfg.initial_cols = 3;
  const FlResult result = fedavg_run(task, cfg, 13);
  for (const RoundLog& log : result.logs) EXPECT_EQ(log.cols, 3);
}

TEST(AdaptTailFlTest, PersistentErrorGrowsGeometricallyToTheCap) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptTail;
  cfg.noise_multiplier = 0.0;  // threshold 0, error > 0: always grow
  cfg.eta = 0.2;
  cfg.rounds = 40;
  const FlSketchShape shape = fl_sketch_shape(task.dim);
  const FlResult result = fedavg_run(task, cfg, 15);
  int prev = 0;
  for (const RoundLog& log : result.logs) {
    EXPECT_GE(log.cols, prev);
    EXPECT_LE(log.cols, shape.max_cols);
    prev = log.cols;
  }
  EXPECT_EQ(result.logs.back().cols, shape.max_cols);
}

TEST(AdaptTailFlTest, EtaOneDoubles) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptTail;
  cfg.noise_multiplier = 0.0;
  cfg.eta = 1.0;
  cfg.rounds = 3;
  cfg.initial_cols = 2;
  FlSketchShape shape = fl_sketch_shape(task.dim);
  const FlResult result = fedavg_run(task, cfg, 17);
  // 2 -> 4 -> capped.
  EXPECT_EQ(result.logs[0].cols, 2);
  EXPECT_EQ(result.logs[1].cols, std::min(4, shape.max_cols));
}

TEST(AdaptTailFlTest, AlternativeUpdateRulesRun) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.estimator = MeanEstimator::kAdaptTail;
  cfg.noise_multiplier = 0.2;
  cfg.rounds = 5;
  for (const TailUpdateRule rule :
       {TailUpdateRule::kMultError, TailUpdateRule::kLinear}) {
    cfg.tail_rule = rule;
    const FlResult result = fedavg_run(task, cfg, 19);
    EXPECT_EQ(result.logs.size(), 5u);
  }
}

TEST(FedavgTest, L1ZeroingDropsAllUpdates) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.l1_zero_threshold = 1e-9;  // everything exceeds it and gets zeroed
  const FlResult result = fedavg_run(task, cfg, 21);
  for (const double v : result.model) EXPECT_EQ(v, 0.0);
}

TEST(FedavgTest, DivergenceAbortsWithDiagnostic) {
  const Task task = Task::synthetic_linear(20, 10, 16, 0.1, 5);
  FlConfig cfg = base_config();
  cfg.client_lr = 1e200;  // overflows the local steps to non-finite
  cfg.local_steps = 3;
  cfg.rounds = 5;
  const FlResult result = fedavg_run(task, cfg, 23);
  EXPECT_TRUE(result.diverged);
  EXPECT_FALSE(result.diagnostic.empty());
  EXPECT_LT(result.logs.size(), 5u);
}

TEST(FedavgTest, ValidationErrors) {
  const Task task = small_task();
  FlConfig cfg = base_config();
  cfg.clients_per_round = 0;
  EXPECT_THROW(fedavg_run(task, cfg, 1), std::invalid_argument);
  cfg = base_config();
  cfg.eta = 0.0;
  EXPECT_THROW(fedavg_run(task, cfg, 1), std::invalid_argument);
  cfg = base_config();
  cfg.c0 = 0.0;
  EXPECT_THROW(fedavg_run(task, cfg, 1), std::invalid_argument);
  cfg = base_config();
  cfg.clients_per_round = 1000;  // larger than the client count
  EXPECT_THROW(fedavg_run(task, cfg, 1), std::invalid_argument);
}

TEST(TaskTest, SparseLogisticPlantsALearnableSignal) {
  const Task task = small_task();
  EXPECT_EQ(task.dim, 24);
  EXPECT_EQ(task.clients.size(), 40u);
  // Accuracy at the zero model is chance-level; a few FedAvg rounds beat it.
  const double before = evaluate(task, task.validation,
                                 std::vector<double>(task.dim, 0.0));
  FlConfig cfg = base_config();
  cfg.rounds = 30;
  const FlResult result = fedavg_run(task, cfg, 25);
  const double after = evaluate(task, task.validation, result.model);
  EXPECT_GT(after, before + 0.1);
}

}  // namespace
}  // namespace adasketch
