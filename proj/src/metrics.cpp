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

#include "adasketch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adasketch {

long CommLedger::total_scalars() const {
  long total = 0;
  for (const auto& [first, second] : scalars) total += first + second;
  return total;
}

double compression_rate(const CommLedger& ledger) {
  if (ledger.scalars.empty()) {
    throw std::invalid_argument("compression_rate: ledger has no rounds");
  }
  const long total = ledger.total_scalars();
  if (total <= 0) {
    throw std::invalid_argument("compression_rate: total scalars must be > 0");
  }
  return static_cast<double>(ledger.dim) * ledger.scalars.size() / total;
}

namespace detail {

std::vector<double> squared_tail_profile(std::span<const double> mu,
                                         double G) {
  if (!(G > 0.0)) {
    throw std::invalid_argument("tail_norm: G must be positive");
  }
  std::vector<double> mags(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mags[i] = std::abs(mu[i]);
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  const int d = static_cast<int>(mu.size());
  // tail2[k] = sum of squares of all but the k largest, ascending-magnitude
  // accumulation for reproducibility.
  std::vector<double> tail2(d + 1, 0.0);
  double acc = 0.0;
  for (int k = d - 1; k >= 0; --k) {
    acc += mags[k] * mags[k];
    tail2[k] = acc / (G * G);
  }
  return tail2;
}

}  // namespace detail

double tail_norm(std::span<const double> z, int k, double G) {
  const int d = static_cast<int>(z.size());
  if (k < 0 || k > d) {
    throw std::invalid_argument("tail_norm: need 0 <= k <= d");
  }
  return std::sqrt(detail::squared_tail_profile(z, G)[k]);
}

double mse(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) {
    throw std::invalid_argument("mse: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double diff = estimate[i] - truth[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace adasketch
