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

#include "adasketch/secagg.hpp"

#include <cmath>
#include <stdexcept>

namespace adasketch {

namespace {

std::uint64_t pair_stream_key(std::uint64_t seed, std::uint64_t round, int a,
                              int b, int n) {
  const std::uint64_t pair_id =
      static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) +
      static_cast<std::uint64_t>(b);
  return mix(derive_seed(seed, round, StreamTag::kMask), pair_id);
}

}  // namespace

void FieldConfig::validate(int n, double max_abs_value) const {
  if (modulus_bits != 32 && modulus_bits != 64) {
    throw std::invalid_argument("FieldConfig: modulus_bits must be 32 or 64");
  }
  if (scale_bits < 1 || scale_bits >= modulus_bits) {
    throw std::invalid_argument("FieldConfig: scale_bits out of range");
  }
  // No wraparound of the true sum: |v| * 2^scale * n < 2^(modulus_bits-1).
  const double headroom = std::ldexp(1.0, modulus_bits - 1);
  if (max_abs_value * std::ldexp(1.0, scale_bits) * n >= headroom) {
    throw std::range_error(
        "FieldConfig: values would wrap the ring; lower scale_bits or values");
  }
}

std::vector<std::vector<std::uint64_t>> pairwise_masks(
    int n, std::uint64_t round, std::uint64_t seed, std::size_t len,
    const FieldConfig& field) {
  if (n < 2) throw std::invalid_argument("pairwise_masks: need n >= 2");
  const std::uint64_t ring = field.ring_mask();
  std::vector<std::vector<std::uint64_t>> masks(
      n, std::vector<std::uint64_t>(len, 0));
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      Stream s(pair_stream_key(seed, round, a, b, n));
      for (std::size_t i = 0; i < len; ++i) {
        const std::uint64_t r = s.next_u64() & ring;
        masks[a][i] = (masks[a][i] + r) & ring;
        masks[b][i] = (masks[b][i] - r) & ring;
      }
    }
  }
  return masks;
}

namespace {

std::uint64_t encode_fixed(double v, int scale_bits, std::uint64_t ring) {
  const double scaled = std::round(v * std::ldexp(1.0, scale_bits));
  const long long q = static_cast<long long>(scaled);
  return static_cast<std::uint64_t>(q) & ring;
}

void check_range(std::span<const double> v, int n, const FieldConfig& field) {
  const double headroom = std::ldexp(1.0, field.modulus_bits - 1);
  const double scale = std::ldexp(1.0, field.scale_bits);
  for (const double x : v) {
    if (!(std::abs(x) * scale * n < headroom)) {
      throw std::range_error("secagg: value would wrap the ring");
    }
  }
}

}  // namespace

MaskedMessage client_encode(std::span<const double> v, int client_id, int n,
                            std::uint64_t round, std::uint64_t seed,
                            const FieldConfig& field) {
  if (n < 2) throw std::invalid_argument("client_encode: need n >= 2");
  if (client_id < 0 || client_id >= n) {
    throw std::invalid_argument("client_encode: client_id out of range");
  }
  check_range(v, n, field);
  const std::uint64_t ring = field.ring_mask();
  MaskedMessage msg;
  msg.client_id = client_id;
  msg.round_id = round;
  msg.payload.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    msg.payload[i] = encode_fixed(v[i], field.scale_bits, ring);
  }
  // Own share of every pairwise mask; shares cancel when all n are summed.
  for (int other = 0; other < n; ++other) {
    if (other == client_id) continue;
    const int a = client_id < other ? client_id : other;
    const int b = client_id < other ? other : client_id;
    Stream s(pair_stream_key(seed, round, a, b, n));
    const bool positive = client_id == a;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::uint64_t r = s.next_u64() & ring;
      msg.payload[i] =
          (positive ? msg.payload[i] + r : msg.payload[i] - r) & ring;
    }
  }
  return msg;
}

MaskedAggregator::MaskedAggregator(std::size_t len, int n,
                                   const FieldConfig& field)
    : acc_(len, 0), expected_(n), field_(field) {
  if (n < 2) throw std::invalid_argument("MaskedAggregator: need n >= 2");
}

void MaskedAggregator::add(const MaskedMessage& message) {
  if (message.payload.size() != acc_.size()) {
    throw std::invalid_argument("MaskedAggregator: payload length mismatch");
  }
  const std::uint64_t ring = field_.ring_mask();
  for (std::size_t i = 0; i < acc_.size(); ++i) {
    acc_[i] = (acc_[i] + message.payload[i]) & ring;
  }
  ++received_;
}

std::vector<double> MaskedAggregator::average() const {
  if (received_ != expected_) {
    throw std::logic_error("MaskedAggregator: sum incomplete, masks present");
  }
  const double inv_scale = std::ldexp(1.0, -field_.scale_bits);
  std::vector<double> out(acc_.size());
  for (std::size_t i = 0; i < acc_.size(); ++i) {
    long long centered;
    if (field_.modulus_bits == 64) {
      centered = static_cast<long long>(acc_[i]);
    } else {
      const std::uint64_t half = 1ULL << (field_.modulus_bits - 1);
      centered = static_cast<long long>(
          acc_[i] >= half ? static_cast<long long>(acc_[i]) -
                                (1LL << field_.modulus_bits)
                          : static_cast<long long>(acc_[i]));
    }
    out[i] = static_cast<double>(centered) * inv_scale / expected_;
  }
  return out;
}

std::vector<double> secagg_sum(std::span<const std::vector<double>> messages,
                               SecAggMode mode, const FieldConfig& field,
                               std::uint64_t round, std::uint64_t seed) {
  if (messages.empty()) {
    throw std::invalid_argument("secagg_sum: no messages");
  }
  const std::size_t len = messages[0].size();
  for (const auto& m : messages) {
    if (m.size() != len) {
      throw std::invalid_argument("secagg_sum: length mismatch");
    }
  }
  const int n = static_cast<int>(messages.size());
  if (mode == SecAggMode::kIdeal) {
    std::vector<double> out(len, 0.0);
    for (const auto& m : messages) {
      for (std::size_t i = 0; i < len; ++i) out[i] += m[i];
    }
    for (double& x : out) x /= n;
    return out;
  }
  if (n < 2) throw std::invalid_argument("secagg_sum: masked mode needs n >= 2");
  MaskedAggregator agg(len, n, field);
  for (int c = 0; c < n; ++c) {
    agg.add(client_encode(messages[c], c, n, round, seed, field));
  }
  return agg.average();
}

}  // namespace adasketch
