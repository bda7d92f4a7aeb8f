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

#ifndef ADASKETCH_SECAGG_HPP_
#define ADASKETCH_SECAGG_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "adasketch/rng.hpp"

namespace adasketch {

// Simulated secure aggregation. Ideal mode returns the exact real-valued
// average; masked mode runs fixed-point encoding plus pairwise additive
// masks over the ring Z_{2^modulus_bits}, which cancel exactly on the sum.
// The server-side aggregator only ever sees masked payloads.

enum class SecAggMode { kIdeal, kMasked };

struct FieldConfig {
  int modulus_bits = 64;  // ring = integers mod 2^modulus_bits; 32 or 64
  int scale_bits = 20;    // fixed-point scale 2^scale_bits

  void validate(int n, double max_abs_value) const;
  std::uint64_t ring_mask() const {
    return modulus_bits == 64 ? ~0ULL : ((1ULL << modulus_bits) - 1);
  }
};

struct MaskedMessage {
  std::vector<std::uint64_t> payload;  // ring elements, mask already applied
  int client_id = -1;
  std::uint64_t round_id = 0;
};

// n mask vectors summing to zero mod the ring, derived from
// (seed, round, pair) streams. Any strict subset sum is uniform.
std::vector<std::vector<std::uint64_t>> pairwise_masks(
    int n, std::uint64_t round, std::uint64_t seed, std::size_t len,
    const FieldConfig& field);

// Client-side boundary: fixed-point encode + own mask. Throws
// std::range_error if |v|*2^scale_bits*n could wrap the ring.
MaskedMessage client_encode(std::span<const double> v, int client_id, int n,
                            std::uint64_t round, std::uint64_t seed,
                            const FieldConfig& field);

class MaskedAggregator {
 public:
  MaskedAggregator(std::size_t len, int n, const FieldConfig& field);

  void add(const MaskedMessage& message);

  // Decoded average; valid only once all n payloads were added (masks
  // cancel). Throws std::logic_error otherwise.
  std::vector<double> average() const;

 private:
  std::vector<std::uint64_t> acc_;
  int expected_;
  int received_ = 0;
  FieldConfig field_;
};

// Average of the client vectors through the selected functionality.
std::vector<double> secagg_sum(std::span<const std::vector<double>> messages,
                               SecAggMode mode, const FieldConfig& field,
                               std::uint64_t round = 0, std::uint64_t seed = 0);

}  // namespace adasketch

#endif  // ADASKETCH_SECAGG_HPP_
