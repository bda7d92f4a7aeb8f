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

#include "adasketch/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adasketch {

void SketchParams::validate() const {
  if (rows < 1 || pads < 1 || cols < 1 || dim < 1) {
    throw std::invalid_argument("SketchParams: R, P, C, d must all be >= 1");
  }
}

SketchOperator::SketchOperator(const SketchParams& params, std::uint64_t seed)
    : params_(params), seed_(seed) {
  params_.validate();
  pad_keys_.resize(static_cast<std::size_t>(params_.rows) * params_.pads);
  for (int i = 0; i < params_.rows; ++i) {
    for (int p = 0; p < params_.pads; ++p) {
      pad_keys_[static_cast<std::size_t>(i) * params_.pads + p] =
          mix64(mix(seed, static_cast<std::uint64_t>(i),
                    static_cast<std::uint64_t>(p)));
    }
  }
}

namespace {

// One (row, pad) slice: scans coordinates in ascending order so the bucket
// sums have a fixed summation order regardless of thread count.
void sketch_slice(const SketchOperator& op, int row, int pad,
                  std::span<const double> z, double inv_sqrt_p,
                  std::span<double> out_cols) {
  const int cols = op.params().cols;
  const int d = op.params().dim;
  std::fill(out_cols.begin(), out_cols.end(), 0.0);
  for (int q = 0; q < d; ++q) {
    const std::uint64_t u = op.cell_hash(row, pad, q);
    const int c = static_cast<int>(((u >> 32) * cols) >> 32);
    const double s = (u & 1u) ? 1.0 : -1.0;
    out_cols[c] += s * z[q];
  }
  for (int c = 0; c < cols; ++c) out_cols[c] *= inv_sqrt_p;
}

double median_in_place(std::span<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SketchOperator::sketch_into(std::span<const double> z,
                                 std::span<double> out) const {
  if (static_cast<int>(z.size()) != params_.dim) {
    throw std::invalid_argument("sketch: input length != d");
  }
  if (out.size() != params_.total_len()) {
    throw std::invalid_argument("sketch: output length != R*P*C");
  }
  const int rows = params_.rows;
  const int pads = params_.pads;
  const int cols = params_.cols;
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(pads));
  const int slices = rows * pads;
  const long work = static_cast<long>(slices) * params_.dim;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int s = 0; s < slices; ++s) {
    const int i = s / pads;
    const int p = s % pads;
    sketch_slice(*this, i, p, z, inv_sqrt_p,
                 out.subspan(static_cast<std::size_t>(s) * cols, cols));
  }
}

SketchedVector SketchOperator::sketch(std::span<const double> z) const {
  SketchedVector out;
  out.params = params_;
  out.data.resize(params_.total_len());
  sketch_into(z, out.data);
  return out;
}

std::vector<double> SketchOperator::unsketch_row(
    int row, std::span<const double> s) const {
  if (row < 0 || row >= params_.rows) {
    throw std::invalid_argument("unsketch_row: row out of range");
  }
  if (s.size() != params_.row_len()) {
    throw std::invalid_argument("unsketch_row: row length != P*C");
  }
  const int pads = params_.pads;
  const int cols = params_.cols;
  const int d = params_.dim;
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(pads));
  std::vector<double> z(d);
  const long work = static_cast<long>(pads) * d;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int q = 0; q < d; ++q) {
    double acc = 0.0;
    for (int p = 0; p < pads; ++p) {
      const std::uint64_t u = cell_hash(row, p, q);
      const int c = static_cast<int>(((u >> 32) * cols) >> 32);
      const double sgn = (u & 1u) ? 1.0 : -1.0;
      acc += sgn * s[static_cast<std::size_t>(p) * cols + c];
    }
    z[q] = acc * inv_sqrt_p;
  }
  return z;
}

std::vector<double> SketchOperator::unsketch_median(
    std::span<const double> data) const {
  if (data.size() != params_.total_len()) {
    throw std::invalid_argument("unsketch_median: length != R*P*C");
  }
  const int rows = params_.rows;
  const int pads = params_.pads;
  const int cols = params_.cols;
  const int d = params_.dim;
  const std::size_t row_len = params_.row_len();
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(pads));
  std::vector<double> z(d);
  const long work = static_cast<long>(rows) * pads * d;
#pragma omp parallel if (work > 1 << 15)
  {
    std::vector<double> est(rows);
#pragma omp for schedule(static)
    for (int q = 0; q < d; ++q) {
      for (int i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row_data = data.data() + i * row_len;
        for (int p = 0; p < pads; ++p) {
          const std::uint64_t u = cell_hash(i, p, q);
          const int c = static_cast<int>(((u >> 32) * cols) >> 32);
          const double sgn = (u & 1u) ? 1.0 : -1.0;
          acc += sgn * row_data[static_cast<std::size_t>(p) * cols + c];
        }
        est[i] = acc * inv_sqrt_p;
      }
      z[q] = median_in_place(est);
    }
  }
  return z;
}

std::vector<double> SketchOperator::unsketch_median(
    const SketchedVector& s) const {
  return unsketch_median(std::span<const double>(s.data));
}

std::vector<double> top_k(std::span<const double> v, int k) {
  const int d = static_cast<int>(v.size());
  if (k < 0 || k > d) {
    throw std::invalid_argument("top_k: need 0 <= k <= len(v)");
  }
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ma = std::abs(v[a]);
    const double mb = std::abs(v[b]);
    if (ma != mb) return ma > mb;
    return a < b;  // ties: lowest index wins
  });
  std::vector<double> out(d, 0.0);
  for (int j = 0; j < k; ++j) out[idx[j]] = v[idx[j]];
  return out;
}

double squared_l2(std::span<const double> v) {
  double acc = 0.0;
  for (const double x : v) acc += x * x;
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(squared_l2(v)); }

std::vector<double> clip(std::span<const double> v, double bound) {
  std::vector<double> out(v.begin(), v.end());
  clip_in_place(out, bound);
  return out;
}

void clip_in_place(std::span<double> v, double bound) {
  if (!(bound > 0.0)) {
    throw std::invalid_argument("clip: bound must be positive");
  }
  const double norm = l2_norm(v);
  if (norm <= bound) return;
  const double scale = bound / norm;
  for (double& x : v) x *= scale;
}

namespace ref {

SketchedVector sketch(const SketchOperator& op, std::span<const double> z) {
  const SketchParams& p = op.params();
  if (static_cast<int>(z.size()) != p.dim) {
    throw std::invalid_argument("ref::sketch: input length != d");
  }
  SketchedVector out;
  out.params = p;
  out.data.assign(p.total_len(), 0.0);
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p.pads));
  for (int i = 0; i < p.rows; ++i) {
    for (int pad = 0; pad < p.pads; ++pad) {
      double* cols =
          out.data.data() +
          (static_cast<std::size_t>(i) * p.pads + pad) * p.cols;
      for (int q = 0; q < p.dim; ++q) {
        cols[op.bucket(i, pad, q)] += op.sign(i, pad, q) * z[q];
      }
      for (int c = 0; c < p.cols; ++c) cols[c] *= inv_sqrt_p;
    }
  }
  return out;
}

std::vector<double> unsketch_median(const SketchOperator& op,
                                    std::span<const double> data) {
  const SketchParams& p = op.params();
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p.pads));
  std::vector<double> z(p.dim);
  std::vector<double> est(p.rows);
  for (int q = 0; q < p.dim; ++q) {
    for (int i = 0; i < p.rows; ++i) {
      double acc = 0.0;
      for (int pad = 0; pad < p.pads; ++pad) {
        acc += op.sign(i, pad, q) *
               data[(static_cast<std::size_t>(i) * p.pads + pad) * p.cols +
                    op.bucket(i, pad, q)];
      }
      est[i] = acc * inv_sqrt_p;
    }
    std::sort(est.begin(), est.end());
    z[q] = (p.rows % 2 == 1)
               ? est[p.rows / 2]
               : 0.5 * (est[p.rows / 2 - 1] + est[p.rows / 2]);
  }
  return z;
}

}  // namespace ref

}  // namespace adasketch
