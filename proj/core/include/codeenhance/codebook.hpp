// Copyright (c) 2026 CodeEnhance Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "codeenhance/autograd.hpp"
#include "codeenhance/tensor.hpp"

namespace codeenhance {

/// N x d code matrix plus an additive shift of the same size.
///
/// The effective codebook is `codes + shift` when `shift_enabled`, otherwise
/// `codes`. A fresh codebook has an all-zero shift, so enabling the shift on
/// a pre-trained codebook starts exactly at the pre-trained entries.
template <typename T>
struct Codebook {
  Tensor<T> codes;  // [N, d], row-major (code, channel)
  Tensor<T> shift;  // [N, d]
  bool shift_enabled = true;

  Codebook() = default;
  Codebook(Tensor<T> codes_in, bool enabled = true);
  Codebook(Tensor<T> codes_in, Tensor<T> shift_in, bool enabled);

  std::int64_t size() const { return codes.dim(0); }
  std::int64_t dim() const { return codes.dim(1); }
};

/// Squared distances are reported, not L2 distances.
template <typename T>
struct QuantizationResult {
  Tensor<T> quantized;                 // same shape as the input [B, d, m, n]
  std::vector<std::int32_t> indices;   // B*m*n, row-major over (b, i, j)
  std::vector<T> distances;            // squared L2 to the selected code
  std::int64_t batch = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int32_t index(std::int64_t b, std::int64_t i, std::int64_t j) const {
    return indices[static_cast<std::size_t>((b * height + i) * width + j)];
  }
};

/// One m x n grid of selected code indices.
struct IndexGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::int32_t> indices;
};

template <typename T>
Tensor<T> apply_shift(const Codebook<T>& cb);

/// Nearest-code assignment against an explicit [N, d] table. Ties resolve to the
/// lowest index.
template <typename T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Tensor<T>& table);

/// Nearest-code assignment against the effective codebook.
template <typename T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Codebook<T>& cb);

/// Forward value `q.quantized`, identity gradient into `z`.
template <typename T>
ag::Var<T> straight_through(const ag::Var<T>& z, const QuantizationResult<T>& q);

/// Splits a batched result into per-item grids.
template <typename T>
std::vector<IndexGrid> index_grids(const QuantizationResult<T>& q);

std::vector<std::int64_t> usage_histogram(std::span<const IndexGrid> grids, std::int64_t num_codes);

/// Pearson correlation of two equally sized vectors; throws DegenerateStatistics
/// when either is constant.
double pearson_alignment(std::span<const double> a, std::span<const double> b);
double pearson_alignment(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

/// Indices of the `k` most frequent codes, by count descending then index ascending.
std::vector<std::int64_t> top_k_codes(std::span<const std::int64_t> histogram, std::size_t k);

}  // namespace codeenhance
