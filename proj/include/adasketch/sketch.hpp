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

#ifndef ADASKETCH_SKETCH_HPP_
#define ADASKETCH_SKETCH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adasketch/rng.hpp"

namespace adasketch {

// Count-median-of-means sketching: R independent count-mean sketches, each
// built from P count sketches of width C, scaled by 1/sqrt(P). R = 1 gives
// the plain count-mean sketch. All hash values are pure functions of
// (seed, row, pad, coord); operators are immutable and shareable across
// threads.

struct SketchParams {
  int rows = 1;  // R
  int pads = 1;  // P
  int cols = 1;  // C
  int dim = 1;   // d

  std::size_t row_len() const {
    return static_cast<std::size_t>(pads) * cols;
  }
  // Total sketch length R*P*C: the per-client message size in scalars.
  std::size_t total_len() const {
    return static_cast<std::size_t>(rows) * row_len();
  }
  void validate() const;
};

struct SketchedVector {
  std::vector<double> data;  // rows x (pads*cols), row-major
  SketchParams params;

  std::span<double> row(int i) {
    return std::span<double>(data).subspan(i * params.row_len(),
                                           params.row_len());
  }
  std::span<const double> row(int i) const {
    return std::span<const double>(data).subspan(i * params.row_len(),
                                                 params.row_len());
  }
};

class SketchOperator {
 public:
  SketchOperator(const SketchParams& params, std::uint64_t seed);

  const SketchParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  // Bucket hash h_p^(i)(q) in [C].
  int bucket(int row, int pad, int coord) const {
    const std::uint64_t u = cell_hash(row, pad, coord);
    return static_cast<int>(((u >> 32) * params_.cols) >> 32);
  }

  // Sign hash s_p^(i)(q) in {-1, +1}.
  double sign(int row, int pad, int coord) const {
    return (cell_hash(row, pad, coord) & 1u) ? 1.0 : -1.0;
  }

  SketchedVector sketch(std::span<const double> z) const;
  void sketch_into(std::span<const double> z, std::span<double> out) const;

  // Transpose-apply of one row: unbiased coordinate estimates from row data
  // of length P*C.
  std::vector<double> unsketch_row(int row, std::span<const double> s) const;

  // Coordinatewise median over the R row estimates. For even R the median is
  // the arithmetic mean of the two central order statistics, which preserves
  // the sign-symmetry of the error distribution.
  std::vector<double> unsketch_median(const SketchedVector& s) const;
  std::vector<double> unsketch_median(std::span<const double> data) const;

  std::uint64_t cell_hash(int row, int pad, int coord) const {
    const std::uint64_t k =
        pad_keys_[static_cast<std::size_t>(row) * params_.pads + pad];
    return mix64(k ^ (static_cast<std::uint64_t>(coord) * kMixGamma));
  }

 private:
  SketchParams params_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> pad_keys_;  // rows x pads
};

// Keeps the k largest-magnitude coordinates in place and zeroes the rest.
// Ties are broken by lowest index. Throws on k > len or k < 0.
std::vector<double> top_k(std::span<const double> v, int k);

// Rescales v to norm at most bound; clip(0) = 0. Throws on bound <= 0.
std::vector<double> clip(std::span<const double> v, double bound);
void clip_in_place(std::span<double> v, double bound);

// Fixed ascending-order l2 accumulation, bit-reproducible across runs.
double l2_norm(std::span<const double> v);
double squared_l2(std::span<const double> v);

namespace ref {
// Serial reference kernels, kept for testing the OpenMP paths against.
SketchedVector sketch(const SketchOperator& op, std::span<const double> z);
std::vector<double> unsketch_median(const SketchOperator& op,
                                    std::span<const double> data);
}  // namespace ref

}  // namespace adasketch

#endif  // ADASKETCH_SKETCH_HPP_
