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
#include <stdexcept>

#include "adasketch/sketch.hpp"

namespace adasketch {

void PrivacyBudget::validate() const {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("PrivacyBudget: epsilon must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("PrivacyBudget: delta must be in (0, 1)");
  }
}

NoiseConfig calibrate(const PrivacyBudget& budget, double clip_bound, int n,
                      Protocol protocol, int rows, int max_rounds) {
  budget.validate();
  if (!(clip_bound > 0.0)) {
    throw std::invalid_argument("calibrate: clip bound must be > 0");
  }
  if (n < 1) throw std::invalid_argument("calibrate: n must be >= 1");
  NoiseConfig cfg;
  cfg.clip_bound = clip_bound;
  if (!budget.finite()) return cfg;  // eps -> inf: all scales 0

  const double b2 = clip_bound * clip_bound;
  const double log_inv_delta = std::log(1.0 / budget.delta);
  const double eps2 = budget.epsilon * budget.epsilon;
  double sigma2 = 0.0;
  switch (protocol) {
    case Protocol::kAdaptNormFme:
      sigma2 = 256.0 * b2 * log_inv_delta / eps2;
      break;
    case Protocol::kAdaptTailFme:
    case Protocol::kAdaptTailTopkFme:
      sigma2 = 256.0 * rows * static_cast<double>(max_rounds) * max_rounds *
               b2 * log_inv_delta / eps2;
      break;
    default:
      throw std::invalid_argument("calibrate: unknown protocol");
  }
  cfg.sigma = std::sqrt(sigma2);
  cfg.sigma_tilde = 4.0 * clip_bound / (n * budget.epsilon);
  return cfg;
}

FlNoise calibrate_fl(double noise_multiplier, double clip_bound, int n,
                     FlProtocol protocol) {
  if (noise_multiplier < 0.0) {
    throw std::invalid_argument("calibrate_fl: noise multiplier must be >= 0");
  }
  if (!(clip_bound > 0.0)) {
    throw std::invalid_argument("calibrate_fl: clip bound must be > 0");
  }
  if (n < 1) throw std::invalid_argument("calibrate_fl: n must be >= 1");
  const double base = noise_multiplier * clip_bound / n;
  switch (protocol) {
    case FlProtocol::kAdaptNorm:
    case FlProtocol::kAdaptTail:
      // 9:1 variance split between mean and scalar statistic.
      return {base / std::sqrt(0.9), base / std::sqrt(0.1)};
    case FlProtocol::kTwoStage:
      return {base, base / std::sqrt(0.1)};
  }
  throw std::invalid_argument("calibrate_fl: unknown protocol");
}

std::vector<double> gaussian_vector(std::size_t len, double scale,
                                    Stream& rng) {
  std::vector<double> v(len, 0.0);
  add_gaussian(v, scale, rng);
  return v;
}

void add_gaussian(std::span<double> v, double scale, Stream& rng) {
  if (scale < 0.0) {
    throw std::invalid_argument("gaussian: scale must be >= 0");
  }
  if (scale == 0.0) return;
  for (double& x : v) x += rng.gaussian(scale);
}

double laplace_scalar(double scale, Stream& rng) {
  if (scale < 0.0) {
    throw std::invalid_argument("laplace: scale must be >= 0");
  }
  return rng.laplace(scale);
}

AboveThreshold::AboveThreshold(double threshold, double sigma_tilde,
                               Stream rng, int)
    : sigma_tilde_(sigma_tilde),
      noisy_threshold_(threshold),
      rng_(rng) {
  noisy_threshold_ += rng_.laplace(sigma_tilde_);
}

AboveThreshold::AboveThreshold(double threshold, double sensitivity,
                               double eps_slice, Stream rng)
    : AboveThreshold(
          threshold,
          std::isfinite(eps_slice) ? 2.0 * sensitivity / eps_slice : 0.0, rng,
          0) {
  if (!(eps_slice > 0.0)) {
    throw std::invalid_argument("AboveThreshold: eps slice must be > 0");
  }
}

AboveThreshold AboveThreshold::with_noise_scale(double threshold,
                                                double sigma_tilde,
                                                Stream rng) {
  return AboveThreshold(threshold, sigma_tilde, rng, 0);
}

bool AboveThreshold::query(double value, double moving_offset) {
  if (halted_) {
    throw std::logic_error("AboveThreshold: query after halt");
  }
  ++queries_;
  const double noisy = value - moving_offset + rng_.laplace(2.0 * sigma_tilde_);
  if (noisy <= noisy_threshold_) {
    halted_ = true;
    halt_index_ = queries_;
    return true;
  }
  return false;
}

double above_threshold_accuracy(int num_queries, double sensitivity,
                                double eps_slice, double beta) {
  return 8.0 * sensitivity *
         (std::log(static_cast<double>(num_queries)) + std::log(2.0 / beta)) /
         eps_slice;
}

SensitivityReport assert_sensitivity(
    std::span<const std::vector<double>> client_messages, std::size_t row_len,
    double clip_bound) {
  constexpr double kTol = 1.0 + 1e-9;
  for (int c = 0; c < static_cast<int>(client_messages.size()); ++c) {
    const std::vector<double>& msg = client_messages[c];
    if (msg.size() % row_len != 0) {
      return {false, c, -1, 0.0};
    }
    const int rows = static_cast<int>(msg.size() / row_len);
    for (int r = 0; r < rows; ++r) {
      const double norm = l2_norm(
          std::span<const double>(msg).subspan(r * row_len, row_len));
      if (norm > clip_bound * kTol) {
        return {false, c, r, norm};
      }
    }
  }
  return {};
}

}  // namespace adasketch
