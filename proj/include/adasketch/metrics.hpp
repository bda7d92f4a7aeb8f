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

#ifndef ADASKETCH_METRICS_HPP_
#define ADASKETCH_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace adasketch {

// Per-round first/second sketch scalar counts. Bits-per-scalar is a
// reporting convention only; protocols account in scalars.
struct CommLedger {
  std::vector<std::pair<long, long>> scalars;  // (L_t, L~_t) per round
  int dim = 1;
  int bits_per_scalar = 32;

  void add_round(long first, long second) { scalars.emplace_back(first, second); }
  long total_scalars() const;
  long long total_bits() const {
    return static_cast<long long>(total_scalars()) * bits_per_scalar;
  }
};

// Harmonic-average compression rate d*T / sum_t (L_t + L~_t).
double compression_rate(const CommLedger& ledger);

// Normalized tail norm: (1/G) * l2 mass outside the k largest-magnitude
// coordinates (ties at the k-th magnitude broken by lowest index).
double tail_norm(std::span<const double> z, int k, double G);

struct KTailResult {
  int k = 0;
  bool found = true;  // false when no k in [0, d] satisfies the bound
};

// Generalized sparsity: min k with tail_norm(mu, k)^2 <= g(k). Linear scan
// over sorted-magnitude suffix sums; returns k = d with found=false when no
// k qualifies.
template <typename G>
KTailResult k_tail(G&& g, std::span<const double> mu, double bound);

double mse(std::span<const double> estimate, std::span<const double> truth);

// Implementation.

namespace detail {
// Squared tail norms for all k in [0, d], normalized by G^2.
std::vector<double> squared_tail_profile(std::span<const double> mu, double G);
}  // namespace detail

template <typename G>
KTailResult k_tail(G&& g, std::span<const double> mu, double bound) {
  const std::vector<double> tail2 = detail::squared_tail_profile(mu, bound);
  const int d = static_cast<int>(mu.size());
  for (int k = 0; k <= d; ++k) {
    if (tail2[k] <= g(k)) return {k, true};
  }
  return {d, false};
}

}  // namespace adasketch

#endif  // ADASKETCH_METRICS_HPP_
