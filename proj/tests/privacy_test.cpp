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

#include "adasketch/privacy.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "adasketch/sketch.hpp"

namespace adasketch {
namespace {

TEST(GaussianTest, ZeroScaleGivesZeros) {
  Stream s(1);
  for (const double v : gaussian_vector(100, 0.0, s)) EXPECT_EQ(v, 0.0);
}

TEST(GaussianTest, SampleMomentsMatch) {
  Stream s(2);
  const int n = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.gaussian(1.0);
    sum += x;
    sum_sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.01);
}

TEST(GaussianTest, FixedStreamReproduces) {
  Stream a(7);
  Stream b(7);
  const std::vector<double> va = gaussian_vector(32, 2.0, a);
  const std::vector<double> vb = gaussian_vector(32, 2.0, b);
  EXPECT_EQ(va, vb);
}

TEST(LaplaceTest, ZeroScaleGivesZero) {
  Stream s(3);
  EXPECT_EQ(laplace_scalar(0.0, s), 0.0);
}

TEST(LaplaceTest, SampleMomentsMatch) {
  Stream s(4);
  const int n = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = laplace_scalar(1.0, s);
    sum += x;
    sum_sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  // Var(Laplace(b)) = 2 b^2.
  EXPECT_NEAR(sum_sq / n, 2.0, 0.02);
}

// Tail bound used by the norm-estimate analysis:
// P(|X| > scale * ln(8/beta)) <= beta/4.
TEST(LaplaceTest, ConcentrationBound) {
  Stream s(5);
  const double beta = 0.05;
  const double bound = std::log(8.0 / beta);
  const int n = 1000000;
  int exceed = 0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(laplace_scalar(1.0, s)) > bound) ++exceed;
  }
  EXPECT_LE(exceed, static_cast<int>(beta / 4.0 * n));
}

TEST(CalibrateTest, AdaptNormFormulas) {
  const PrivacyBudget budget{1.0, 1e-5};
  const NoiseConfig noise = calibrate(budget, 2.0, 100,
                                      Protocol::kAdaptNormFme);
  // sig^2 = 256 B^2 ln(1/delta) / eps^2 = 256 * 4 * ln(1e5).
  const double expect = 256.0 * 4.0 * std::log(1e5);
  EXPECT_NEAR(noise.sigma * noise.sigma, expect, 1e-9 * expect);
  EXPECT_DOUBLE_EQ(noise.sigma_tilde, 4.0 * 2.0 / (100.0 * 1.0));
}

TEST(CalibrateTest, AdaptTailScalesWithRowsAndRounds) {
  const PrivacyBudget budget{2.0, 1e-6};
  const int rows = 13;
  const int rounds = 10;
  const NoiseConfig noise =
      calibrate(budget, 2.0, 50, Protocol::kAdaptTailFme, rows, rounds);
  const double expect =
      256.0 * rows * rounds * rounds * 4.0 * std::log(1e6) / 4.0;
  EXPECT_NEAR(noise.sigma * noise.sigma, expect, 1e-9 * expect);
}

TEST(CalibrateTest, InfiniteEpsilonDisablesNoise) {
  const NoiseConfig noise = calibrate(PrivacyBudget::unlimited(), 1.0, 10,
                                      Protocol::kAdaptNormFme);
  EXPECT_EQ(noise.sigma, 0.0);
  EXPECT_EQ(noise.sigma_tilde, 0.0);
}

TEST(CalibrateTest, InvalidBudgetThrows) {
  EXPECT_THROW(calibrate({0.0, 1e-5}, 1.0, 10, Protocol::kAdaptNormFme),
               std::invalid_argument);
  EXPECT_THROW(calibrate({1.0, 0.0}, 1.0, 10, Protocol::kAdaptNormFme),
               std::invalid_argument);
  EXPECT_THROW(calibrate({1.0, 1.5}, 1.0, 10, Protocol::kAdaptNormFme),
               std::invalid_argument);
}

// Average-scale FL noise: sketch std sigma B / (sqrt(0.9) n), scalar std
// sigma B / (sqrt(0.1) n) for the 9:1 split.
TEST(CalibrateTest, FlSplitFormulas) {
  const FlNoise noise = calibrate_fl(0.3, 2.0, 50, FlProtocol::kAdaptNorm);
  EXPECT_NEAR(noise.sketch_std, 0.3 * 2.0 / (std::sqrt(0.9) * 50.0), 1e-15);
  EXPECT_NEAR(noise.scalar_std, 0.3 * 2.0 / (std::sqrt(0.1) * 50.0), 1e-15);
  const FlNoise full = calibrate_fl(0.3, 2.0, 50, FlProtocol::kTwoStage);
  EXPECT_NEAR(full.sketch_std, 0.3 * 2.0 / 50.0, 1e-15);
}

TEST(AboveThresholdTest, ZeroNoiseIsDeterministic) {
  AboveThreshold at = AboveThreshold::with_noise_scale(1.0, 0.0, Stream(1));
  EXPECT_FALSE(at.query(1.5));
  EXPECT_FALSE(at.query(1.0001));
  EXPECT_TRUE(at.query(0.9));
  EXPECT_TRUE(at.halted());
  ASSERT_TRUE(at.halt_index().has_value());
  EXPECT_EQ(*at.halt_index(), 3);
}

TEST(AboveThresholdTest, NeverHaltsAboveThreshold) {
  AboveThreshold at = AboveThreshold::with_noise_scale(0.0, 0.0, Stream(2));
  for (int t = 0; t < 50; ++t) EXPECT_FALSE(at.query(1.0));
  EXPECT_FALSE(at.halted());
}

TEST(AboveThresholdTest, QueryAfterHaltThrows) {
  AboveThreshold at = AboveThreshold::with_noise_scale(1.0, 0.0, Stream(3));
  EXPECT_TRUE(at.query(0.0));
  EXPECT_THROW(at.query(0.0), std::logic_error);
}

TEST(AboveThresholdTest, MovingOffsetShiftsTheQuery) {
  AboveThreshold at = AboveThreshold::with_noise_scale(1.0, 0.0, Stream(4));
  // value 3 with offset 2.5 -> effective 0.5 <= 1: halts.
  EXPECT_TRUE(at.query(3.0, 2.5));
}

// Accuracy guarantee: queries separated from the threshold by the accuracy
// radius alpha = 8 B (ln T + ln(2/beta)) / eps halt at the right index.
TEST(AboveThresholdTest, AccuracyAtTheGap) {
  const int num_queries = 20;
  const double sensitivity = 1.0;
  const double eps = 1.0;
  const double beta = 0.05;
  const double alpha =
      above_threshold_accuracy(num_queries, sensitivity, eps, beta);
  const int halt_at = 13;
  const int trials = 1000;
  int correct = 0;
  for (int t = 0; t < trials; ++t) {
    AboveThreshold at(0.0, sensitivity, eps, Stream(mix(10, t)));
    int halted = -1;
    for (int q = 1; q <= num_queries; ++q) {
      const double value = q == halt_at ? -alpha : alpha;
      if (at.query(value)) {
        halted = q;
        break;
      }
    }
    if (halted == halt_at) ++correct;
  }
  EXPECT_GE(correct, static_cast<int>((1.0 - beta) * trials));
}

TEST(SensitivityTest, CleanMessagesPass) {
  std::vector<std::vector<double>> messages(4, std::vector<double>(6, 0.1));
  const SensitivityReport report = assert_sensitivity(messages, 3, 1.0);
  EXPECT_TRUE(report.ok);
}

TEST(SensitivityTest, OversizedRowIsIdentified) {
  std::vector<std::vector<double>> messages(3, std::vector<double>(4, 0.1));
  messages[1][2] = 3.0;  // second row of client 1 has norm 3B
  const SensitivityReport report = assert_sensitivity(messages, 2, 1.0);
  EXPECT_FALSE(report.ok);
  EXPECT_EQ(report.client, 1);
  EXPECT_EQ(report.row, 1);
  EXPECT_GT(report.norm, 1.0);
}

// Replace-one sensitivity of the clipped average: brute force over a
// two-client instance, all messages clipped to B.
TEST(SensitivityTest, AggregateSensitivityIsTwoBOverN) {
  const double bound = 1.5;
  const int n = 2;
  Stream s(11);
  std::vector<double> base(8), swapped(8);
  for (int i = 0; i < 8; ++i) {
    base[i] = s.gaussian(5.0);
    swapped[i] = s.gaussian(5.0);
  }
  const std::vector<double> shared = clip(gaussian_vector(8, 1.0, s), bound);
  const std::vector<double> a = clip(base, bound);
  const std::vector<double> b = clip(swapped, bound);
  std::vector<double> diff(8);
  for (int i = 0; i < 8; ++i) {
    const double agg_a = (shared[i] + a[i]) / n;
    const double agg_b = (shared[i] + b[i]) / n;
    diff[i] = agg_a - agg_b;
  }
  EXPECT_LE(l2_norm(diff), 2.0 * bound / n + 1e-12);
}

}  // namespace
}  // namespace adasketch
