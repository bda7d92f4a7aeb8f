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

#include "adasketch/fme.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adasketch {

namespace {

int floor_log2(int x) {
  int k = 0;
  while (x >> (k + 1)) ++k;
  return k;
}

int ceil_of(double x) {
  const int v = static_cast<int>(std::ceil(x));
  return v < 1 ? 1 : v;
}

void check_pool(std::span<const std::vector<double>> pool,
                const FmeConfig& cfg, std::size_t min_size) {
  if (pool.size() < min_size) {
    throw std::invalid_argument("fme: client pool too small for the protocol");
  }
  for (const auto& z : pool) {
    if (static_cast<int>(z.size()) != cfg.dim) {
      throw std::invalid_argument("fme: client vector length != d");
    }
    if (l2_norm(z) > cfg.data_bound * (1.0 + 1e-9)) {
      throw std::invalid_argument("fme: client vector norm exceeds G");
    }
  }
}

// Sketch every cohort member, clip each of the R rows to the bound, then
// aggregate through the (simulated) SecAgg boundary. Client-side work is
// embarrassingly parallel; the reduction happens inside secagg_sum in fixed
// client order.
std::vector<double> sketch_clip_aggregate(
    const SketchOperator& op, std::span<const std::vector<double>> pool,
    std::span<const int> cohort, double clip_bound, const FmeConfig& cfg,
    std::uint64_t secagg_round, std::uint64_t seed) {
  const int n = static_cast<int>(cohort.size());
  if (n == 0) throw std::invalid_argument("fme: empty cohort");
  const std::size_t row_len = op.params().row_len();
  std::vector<std::vector<double>> messages(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    messages[i] = op.sketch(pool[cohort[i]]).data;
    for (int r = 0; r < op.params().rows; ++r) {
      clip_in_place(
          std::span<double>(messages[i]).subspan(r * row_len, row_len),
          clip_bound);
    }
  }
  if (cfg.debug_checks) {
    const SensitivityReport report =
        assert_sensitivity(messages, row_len, clip_bound);
    if (!report.ok) {
      throw std::logic_error("fme: clipped message exceeds sensitivity bound");
    }
  }
  return secagg_sum(messages, cfg.secagg_mode, cfg.field, secagg_round, seed);
}

}  // namespace

void FmeConfig::validate() const {
  if (n < 1) throw std::invalid_argument("FmeConfig: n must be >= 1");
  if (dim < 1) throw std::invalid_argument("FmeConfig: d must be >= 1");
  if (!(data_bound > 0.0)) {
    throw std::invalid_argument("FmeConfig: G must be > 0");
  }
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("FmeConfig: beta must be in (0, 1)");
  }
  if (!(p_mult > 0.0) || !(gamma_mult >= 0.0)) {
    throw std::invalid_argument("FmeConfig: invalid theta multipliers");
  }
  budget.validate();
  if (protocol == Protocol::kAdaptNormFme && budget.finite()) {
    const double eps_n = static_cast<double>(n) * budget.epsilon;
    const double limit =
        std::min(std::log(1.0 / budget.delta) / (eps_n * eps_n), 1.0);
    if (!(beta < limit)) {
      throw std::invalid_argument(
          "FmeConfig: adapt-norm requires beta < min(ln(1/delta)/(n eps)^2, 1)");
    }
  }
  if (protocol != Protocol::kAdaptNormFme && dim < 2) {
    throw std::invalid_argument("FmeConfig: adapt-tail requires d >= 2");
  }
  if (protocol == Protocol::kAdaptTailTopkFme &&
      (!gamma_sparse.has_value() || *gamma_sparse < 0.0)) {
    throw std::invalid_argument(
        "FmeConfig: top-k variant needs gamma_sparse >= 0");
  }
}

AdaptNormParams adapt_norm_params(const FmeConfig& cfg) {
  AdaptNormParams p;
  p.clip_bound = 2.0 * cfg.data_bound;
  p.pads = ceil_of(cfg.p_mult * std::log(4.0 / cfg.beta));
  p.second_cols = 2;
  p.noise = calibrate(cfg.budget, p.clip_bound, cfg.n, Protocol::kAdaptNormFme);
  const double stat_term = p.clip_bound *
                           std::sqrt(std::log(16.0 / cfg.beta)) /
                           std::sqrt(static_cast<double>(cfg.n));
  const double priv_term =
      cfg.budget.finite()
          ? 2.0 * p.clip_bound * std::log(8.0 / cfg.beta) /
                (cfg.n * cfg.budget.epsilon)
          : 0.0;
  p.gamma_bar = cfg.gamma_mult * (priv_term + stat_term);
  const double nd = static_cast<double>(cfg.n) * cfg.dim;
  if (cfg.budget.finite()) {
    const double eps_n = static_cast<double>(cfg.n) * cfg.budget.epsilon;
    p.size_budget =
        std::min(eps_n * eps_n / std::log(1.0 / cfg.budget.delta), nd);
  } else {
    p.size_budget = nd;
  }
  return p;
}

long AdaptNormParams::cols_for_norm_estimate(double norm_estimate,
                                             const FmeConfig& cfg) const {
  const double n_hat = std::max(norm_estimate, 0.0);
  const double g2 = cfg.data_bound * cfg.data_bound;
  const double raw = size_budget * (n_hat + gamma_bar) * (n_hat + gamma_bar) /
                     (g2 * pads);
  return std::max(static_cast<long>(std::ceil(raw)), 2L);
}

AdaptTailParams adapt_tail_params(const FmeConfig& cfg) {
  AdaptTailParams p;
  p.clip_bound = 2.0 * cfg.data_bound;
  p.max_rounds = floor_log2(cfg.dim);
  const double k = static_cast<double>(p.max_rounds);
  p.rows = ceil_of(2.0 * std::log(8.0 * cfg.dim * k / cfg.beta));
  p.pads = ceil_of(cfg.p_mult * 2.0 * std::log(8.0 * p.rows * k / cfg.beta));
  p.first_cols = 8 * p.pads;
  p.second_pads =
      ceil_of(cfg.p_mult * 2.0 * std::log(4.0 * cfg.dim * k / cfg.beta));
  p.second_cols = 2 * p.second_pads;
  p.noise = calibrate(cfg.budget, p.clip_bound, cfg.n, cfg.protocol, p.rows,
                      p.max_rounds);
  p.alpha_tilde = cfg.budget.finite()
                      ? 32.0 * p.clip_bound *
                            (std::log(k) + std::log(8.0 / cfg.beta)) /
                            (cfg.n * cfg.budget.epsilon)
                      : 0.0;
  const double stat = cfg.data_bound *
                      std::sqrt(std::log(8.0 * k / cfg.beta)) /
                      std::sqrt(static_cast<double>(cfg.n));
  const double noise_norm =
      std::sqrt(static_cast<double>(cfg.dim)) * p.noise.sigma / cfg.n;
  if (cfg.protocol == Protocol::kAdaptTailTopkFme) {
    p.threshold_fixed =
        cfg.gamma_mult * 16.0 * (*cfg.gamma_sparse * cfg.data_bound + stat) +
        p.alpha_tilde;
  } else {
    p.threshold_fixed =
        cfg.gamma_mult * 15.0 * std::max(stat, noise_norm) + p.alpha_tilde;
  }
  p.sigma_over_n = p.noise.sigma / cfg.n;
  p.gamma_mult = cfg.gamma_mult;
  p.topk = cfg.protocol == Protocol::kAdaptTailTopkFme;
  return p;
}

double AdaptTailParams::moving_offset(int k_j) const {
  if (!topk) return 0.0;
  return gamma_mult * 16.0 * std::sqrt(static_cast<double>(k_j)) *
         sigma_over_n;
}

int AdaptTailParams::k_for_round(int round, int dim, Protocol protocol) const {
  if (protocol != Protocol::kAdaptTailTopkFme) return dim;
  if (round >= 31) return dim;
  return std::min(1 << round, dim);
}

CohortSampler::CohortSampler(std::size_t pool_size, std::uint64_t seed)
    : order_(pool_size) {
  for (std::size_t i = 0; i < pool_size; ++i) order_[i] = static_cast<int>(i);
  Stream s(seed);
  for (std::size_t i = pool_size; i > 1; --i) {
    std::swap(order_[i - 1], order_[s.below(i)]);
  }
}

std::vector<int> CohortSampler::draw(int n) {
  if (n < 1) throw std::invalid_argument("CohortSampler: empty cohort");
  if (used_ + n > order_.size()) {
    throw std::invalid_argument("CohortSampler: pool exhausted");
  }
  std::vector<int> cohort(order_.begin() + used_, order_.begin() + used_ + n);
  used_ += n;
  return cohort;
}

double resketch_error(const SketchOperator& second_op,
                      std::span<const double> mu_bar,
                      std::span<const double> nu_tilde) {
  if (nu_tilde.size() != second_op.params().total_len()) {
    throw std::invalid_argument("resketch_error: aggregate length mismatch");
  }
  const SketchedVector s = second_op.sketch(mu_bar);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double diff = s.data[i] - nu_tilde[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

FmeOutcome adapt_norm_fme(std::span<const std::vector<double>> pool,
                          const FmeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_pool(pool, cfg, 2 * static_cast<std::size_t>(cfg.n));
  const AdaptNormParams p = adapt_norm_params(cfg);

  CohortSampler sampler(pool.size(), derive_seed(seed, 0, StreamTag::kCohort));
  FmeOutcome out;

  // Round 1: second sketch only (C_1 = 0 skips the first-sketch path).
  const std::vector<int> cohort1 = sampler.draw(cfg.n);
  SketchParams second_shape{1, p.pads, p.second_cols, cfg.dim};
  const SketchOperator second_op(second_shape,
                                 derive_seed(seed, 1, StreamTag::kSecondSketch));
  const std::vector<double> nu_tilde = sketch_clip_aggregate(
      second_op, pool, cohort1, p.clip_bound, cfg, /*secagg_round=*/3, seed);
  Stream scalar_noise(seed, 1, StreamTag::kScalarNoise);
  const double norm_raw = std::min(l2_norm(nu_tilde), p.clip_bound);
  const double norm_estimate =
      norm_raw + laplace_scalar(p.noise.sigma_tilde, scalar_noise);
  const long cols2 = p.cols_for_norm_estimate(norm_estimate, cfg);
  out.scalars_per_round.emplace_back(
      0L, static_cast<long>(p.pads) * p.second_cols);
  out.cols_per_round.push_back(0);
  out.norm_estimate = norm_estimate;

  // Round 2: first sketch sized from the private norm estimate.
  const std::vector<int> cohort2 = sampler.draw(cfg.n);
  SketchParams first_shape{1, p.pads, static_cast<int>(cols2), cfg.dim};
  const SketchOperator first_op(first_shape,
                                derive_seed(seed, 2, StreamTag::kFirstSketch));
  std::vector<double> nu = sketch_clip_aggregate(
      first_op, pool, cohort2, p.clip_bound, cfg, /*secagg_round=*/4, seed);
  Stream sketch_noise(seed, 2, StreamTag::kSketchNoise);
  add_gaussian(nu, p.noise.sigma / cfg.n, sketch_noise);
  out.estimate = first_op.unsketch_row(0, nu);
  out.scalars_per_round.emplace_back(static_cast<long>(p.pads) * cols2, 0L);
  out.cols_per_round.push_back(static_cast<int>(cols2));
  out.rounds_used = 2;
  return out;
}

FmeOutcome adapt_tail_fme(std::span<const std::vector<double>> pool,
                          const FmeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const AdaptTailParams p = adapt_tail_params(cfg);
  check_pool(pool, cfg,
             static_cast<std::size_t>(cfg.n) * p.max_rounds);

  CohortSampler sampler(pool.size(), derive_seed(seed, 0, StreamTag::kCohort));
  AboveThreshold stop = AboveThreshold::with_noise_scale(
      p.threshold_fixed, p.noise.sigma_tilde,
      Stream(seed, 0, StreamTag::kThreshold));

  FmeOutcome out;
  int cols = p.first_cols;
  for (int round = 1; round <= p.max_rounds; ++round) {
    const std::vector<int> cohort = sampler.draw(cfg.n);
    SketchParams first_shape{p.rows, p.pads, cols, cfg.dim};
    const SketchOperator first_op(
        first_shape, derive_seed(seed, round, StreamTag::kFirstSketch));
    SketchParams second_shape{1, p.second_pads, p.second_cols, cfg.dim};
    const SketchOperator second_op(
        second_shape, derive_seed(seed, round, StreamTag::kSecondSketch));

    std::vector<double> nu =
        sketch_clip_aggregate(first_op, pool, cohort, p.clip_bound, cfg,
                              /*secagg_round=*/2 * round, seed);
    Stream sketch_noise(seed, round, StreamTag::kSketchNoise);
    add_gaussian(nu, p.noise.sigma / cfg.n, sketch_noise);
    const std::vector<double> nu_tilde =
        sketch_clip_aggregate(second_op, pool, cohort, p.clip_bound, cfg,
                              /*secagg_round=*/2 * round + 1, seed);

    std::vector<double> mu_bar = first_op.unsketch_median(nu);
    const int k_j = p.k_for_round(round, cfg.dim, cfg.protocol);
    if (k_j < cfg.dim) mu_bar = top_k(mu_bar, k_j);
    const double err_estimate = resketch_error(second_op, mu_bar, nu_tilde);

    out.scalars_per_round.emplace_back(
        static_cast<long>(p.rows) * p.pads * cols,
        static_cast<long>(p.second_pads) * p.second_cols);
    out.cols_per_round.push_back(cols);
    out.rounds_used = round;
    out.norm_estimate = err_estimate;
    out.estimate = std::move(mu_bar);

    if (stop.query(err_estimate, p.moving_offset(k_j))) {
      out.halt_index = round;
      return out;
    }
    cols *= 2;
  }
  // No halt within floor(log2 d) rounds: final estimate, halt_index empty.
  return out;
}

FmeOutcome run_fme(std::span<const std::vector<double>> pool,
                   const FmeConfig& cfg, std::uint64_t seed) {
  switch (cfg.protocol) {
    case Protocol::kAdaptNormFme:
      return adapt_norm_fme(pool, cfg, seed);
    case Protocol::kAdaptTailFme:
    case Protocol::kAdaptTailTopkFme:
      return adapt_tail_fme(pool, cfg, seed);
  }
  throw std::invalid_argument("run_fme: unknown protocol");
}

}  // namespace adasketch
