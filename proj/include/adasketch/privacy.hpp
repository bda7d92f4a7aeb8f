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

#ifndef ADASKETCH_PRIVACY_HPP_
#define ADASKETCH_PRIVACY_HPP_

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "adasketch/rng.hpp"

namespace adasketch {

struct PrivacyBudget {
  double epsilon = 1.0;          // may be +inf to disable noise
  double delta = 1e-6;

  bool finite() const { return std::isfinite(epsilon); }
  void validate() const;

  static PrivacyBudget unlimited() {
    return {std::numeric_limits<double>::infinity(), 0.5};
  }
};

enum class Protocol {
  kAdaptNormFme,
  kAdaptTailFme,        // unbiased, k_j = d
  kAdaptTailTopkFme,    // biased, k_j = 2^j
};

// Noise scales derived from the protocol analyses. sigma is the scale such
// that the averaged sketch receives per-entry Gaussian std sigma/n;
// sigma_tilde is the Laplace scale for scalar statistics at average scale.
struct NoiseConfig {
  double sigma = 0.0;
  double sigma_tilde = 0.0;
  double clip_bound = 1.0;
};

// adapt-norm: sigma^2 = 256 B^2 ln(1/delta) / eps^2.
// adapt-tail: sigma^2 = 256 R K^2 B^2 ln(1/delta) / eps^2 (K rounds, R rows).
// Both: sigma_tilde = 4B / (n eps). Basic composition only; the analyses
// supply final scales directly.
NoiseConfig calibrate(const PrivacyBudget& budget, double clip_bound, int n,
                      Protocol protocol, int rows = 1, int max_rounds = 1);

enum class FlProtocol {
  kAdaptNorm,   // 9:1 budget split, Gaussian on the norm statistic
  kTwoStage,    // stage-2: full budget on the sketch
  kAdaptTail,   // 9:1 split, Gaussian on the error statistic
};

// Noise for the FL loop, parameterized by a noise multiplier instead of
// (eps, delta). Both stds are at average scale (applied to the cohort mean).
struct FlNoise {
  double sketch_std = 0.0;  // per entry of the averaged sketch
  double scalar_std = 0.0;  // on the norm / error statistic
};
FlNoise calibrate_fl(double noise_multiplier, double clip_bound, int n,
                     FlProtocol protocol);

// i.i.d. N(0, scale^2) entries; scale = 0 yields zeros.
std::vector<double> gaussian_vector(std::size_t len, double scale,
                                    Stream& rng);
void add_gaussian(std::span<double> v, double scale, Stream& rng);

double laplace_scalar(double scale, Stream& rng);

// AboveThreshold stopping rule (halt when the query drops BELOW the
// threshold). Threshold noise Laplace(sigma_tilde) is sampled once at
// construction; each query gets fresh Laplace(2*sigma_tilde). A
// round-dependent threshold part is absorbed into the query via the
// moving offset. Single-owner, sequential use.
class AboveThreshold {
 public:
  // sigma_tilde = 2 * sensitivity / eps_slice.
  AboveThreshold(double threshold, double sensitivity, double eps_slice,
                 Stream rng);

  static AboveThreshold with_noise_scale(double threshold, double sigma_tilde,
                                         Stream rng);

  // Returns true (and halts) iff noisy(value - moving_offset) <= noisy
  // threshold. Throws std::logic_error if already halted.
  bool query(double value, double moving_offset = 0.0);

  bool halted() const { return halted_; }
  // 1-based index of the halting query.
  std::optional<int> halt_index() const { return halt_index_; }
  double noisy_threshold() const { return noisy_threshold_; }

 private:
  AboveThreshold(double threshold, double sigma_tilde, Stream rng, int);

  double sigma_tilde_;
  double noisy_threshold_;
  Stream rng_;
  bool halted_ = false;
  int queries_ = 0;
  std::optional<int> halt_index_;
};

// Lemma-style accuracy radius for T B_s-sensitive queries at slice eps:
// alpha = 8 B_s (ln T + ln(2/beta)) / eps.
double above_threshold_accuracy(int num_queries, double sensitivity,
                                double eps_slice, double beta);

// Debug check that every client message row was clipped to norm <= B, so the
// averaged aggregate has replace-one sensitivity <= 2B/n.
struct SensitivityReport {
  bool ok = true;
  int client = -1;
  int row = -1;
  double norm = 0.0;
};
SensitivityReport assert_sensitivity(
    std::span<const std::vector<double>> client_messages, std::size_t row_len,
    double clip_bound);

}  // namespace adasketch

#endif  // ADASKETCH_PRIVACY_HPP_
