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

#ifndef ADASKETCH_FME_HPP_
#define ADASKETCH_FME_HPP_

#include <optional>
#include <span>
#include <vector>

#include "adasketch/privacy.hpp"
#include "adasketch/secagg.hpp"
#include "adasketch/sketch.hpp"

namespace adasketch {

// Federated mean estimation with adaptive sketch sizing. Two protocols:
//
//  * adapt-norm: two rounds. Round 1 privately estimates the norm of the
//    mean from a tiny second sketch; round 2 sizes the mean sketch from it.
//  * adapt-tail: up to floor(log2 d) rounds. Sketch size doubles until a
//    privately estimated sketching error drops below a threshold
//    (AboveThreshold). The top-k variant truncates the unsketched estimate
//    to k_j = 2^j coordinates and uses a round-dependent threshold.

struct FmeConfig {
  int n = 10;             // cohort size per round
  int dim = 16;           // d
  double data_bound = 1;  // G; every client vector must satisfy |z| <= G
  PrivacyBudget budget;
  double beta = 0.05;     // failure probability
  Protocol protocol = Protocol::kAdaptNormFme;
  std::optional<double> gamma_sparse;  // tail-norm promise for the top-k variant

  // Theta(.) constants from the analyses, exposed for calibration.
  double p_mult = 1.0;      // multiplier inside the pad counts P, P~
  double gamma_mult = 1.0;  // multiplier on the threshold gamma-bar

  SecAggMode secagg_mode = SecAggMode::kIdeal;
  FieldConfig field;
  bool debug_checks = false;

  void validate() const;
};

struct FmeOutcome {
  std::vector<double> estimate;
  // Per executed round: (first sketch, second sketch) scalars per client.
  std::vector<std::pair<long, long>> scalars_per_round;
  std::vector<int> cols_per_round;  // C_j trajectory
  int rounds_used = 0;
  std::optional<int> halt_index;    // adapt-tail: empty means no halt
  std::optional<double> norm_estimate;

  long total_scalars() const {
    long t = 0;
    for (const auto& [a, b] : scalars_per_round) t += a + b;
    return t;
  }
};

// Derived protocol parameters (sketch shapes, noise, thresholds) for a
// config; exposed so tests can pin the formulas.
struct AdaptNormParams {
  double clip_bound;  // B = 2G
  int pads;           // P = P~ = ceil(p_mult * ln(4/beta))
  int second_cols;    // C~ = 2
  NoiseConfig noise;
  double gamma_bar;
  double size_budget;  // min(n^2 eps^2 / ln(1/delta), n d)
  long cols_for_norm_estimate(double norm_estimate, const FmeConfig& cfg) const;
};
AdaptNormParams adapt_norm_params(const FmeConfig& cfg);

struct AdaptTailParams {
  double clip_bound;   // B = 2G
  int max_rounds;      // K = floor(log2 d)
  int rows;            // R = ceil(2 ln(8 d K / beta))
  int pads;            // P = ceil(p_mult * 2 ln(8 R K / beta))
  int first_cols;      // C_1 = 8P
  int second_pads;     // P~ = ceil(p_mult * 2 ln(4 d K / beta))
  int second_cols;     // C~ = 2 P~
  NoiseConfig noise;
  double alpha_tilde;      // AboveThreshold slack
  double threshold_fixed;  // round-independent part of gamma-bar_j
  double sigma_over_n;     // per-entry noise std on the averaged sketch
  double gamma_mult;
  bool topk;
  // Round-dependent threshold part, absorbed into the query.
  double moving_offset(int k_j) const;
  int k_for_round(int round, int dim, Protocol protocol) const;
};
AdaptTailParams adapt_tail_params(const FmeConfig& cfg);

FmeOutcome adapt_norm_fme(std::span<const std::vector<double>> pool,
                          const FmeConfig& cfg, std::uint64_t seed);
FmeOutcome adapt_tail_fme(std::span<const std::vector<double>> pool,
                          const FmeConfig& cfg, std::uint64_t seed);

// Dispatch on cfg.protocol.
FmeOutcome run_fme(std::span<const std::vector<double>> pool,
                   const FmeConfig& cfg, std::uint64_t seed);

// |S~(mu_bar) - nu_tilde|: sketch-domain estimate of |mu_bar - mu_hat|.
double resketch_error(const SketchOperator& second_op,
                      std::span<const double> mu_bar,
                      std::span<const double> nu_tilde);

// Round-indexed disjoint cohorts drawn without replacement from the pool.
class CohortSampler {
 public:
  CohortSampler(std::size_t pool_size, std::uint64_t seed);
  // Next n distinct, previously unused client indices.
  std::vector<int> draw(int n);
  std::size_t remaining() const { return order_.size() - used_; }

 private:
  std::vector<int> order_;
  std::size_t used_ = 0;
};

}  // namespace adasketch

#endif  // ADASKETCH_FME_HPP_
