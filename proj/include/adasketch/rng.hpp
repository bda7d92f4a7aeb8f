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

#ifndef ADASKETCH_RNG_HPP_
#define ADASKETCH_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace adasketch {

// 64-bit keyed mixing (splittable-stream style). One master seed plus a few
// integer tags fully determine every hash value and noise draw in the
// library, so runs are reproducible from the seed alone, independent of
// thread count.

inline constexpr std::uint64_t kMixGamma = 0x9e3779b97f4a7c15ULL;

// Finalizer with full avalanche (splitmix64).
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += kMixGamma;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b * kMixGamma));
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b,
                                   std::uint64_t c) {
  return mix(mix(a, b), c);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b,
                                   std::uint64_t c, std::uint64_t d) {
  return mix(mix(a, b, c), d);
}

// Purpose tags for sub-seed derivation. Convention: the stream for
// (round j, purpose) is mix(master_seed, j, tag); hashes and noise can never
// alias because their tags differ.
enum class StreamTag : std::uint64_t {
  kFirstSketch = 0x5153u,    // per-round first sketching operator
  kSecondSketch = 0x5253u,   // per-round second sketching operator
  kSketchNoise = 0x4e53u,    // Gaussian noise on the aggregated sketch
  kScalarNoise = 0x4e4cu,    // Laplace/Gaussian noise on scalar statistics
  kThreshold = 0x5448u,      // AboveThreshold threshold noise
  kCohort = 0x434fu,         // cohort sampling
  kMask = 0x4d4bu,           // secagg pairwise masks
  kClient = 0x434cu,         // per-client local work
  kData = 0x4441u,           // synthetic data generation
};

inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::uint64_t round, StreamTag tag) {
  return mix(seed, round, static_cast<std::uint64_t>(tag));
}

// Counter-based uniform stream. next() is a pure function of (key, counter),
// so streams can be recreated at any point and never share state.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(std::uint64_t seed, std::uint64_t round, StreamTag tag)
      : key_(derive_seed(seed, round, tag)) {}

  std::uint64_t next_u64() { return mix(key_, counter_++); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // N(0, scale^2) via Box-Muller; scale == 0 yields exactly 0.
  double gaussian(double scale = 1.0) {
    if (scale == 0.0) return 0.0;
    if (have_spare_) {
      have_spare_ = false;
      return spare_ * scale;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta) * scale;
  }

  // Laplace with the given scale parameter b (density e^{-|x|/b}/2b);
  // scale == 0 yields exactly 0.
  double laplace(double scale) {
    if (scale == 0.0) return 0.0;
    const double u = uniform() - 0.5;
    const double mag = std::log(1.0 - 2.0 * std::abs(u));
    return u < 0.0 ? scale * mag : -scale * mag;
  }

  // Uniform integer in [0, n); n >= 1.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace adasketch

#endif  // ADASKETCH_RNG_HPP_
