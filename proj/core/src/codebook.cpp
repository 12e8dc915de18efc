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

#include "codeenhance/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace codeenhance {

template <typename T>
Codebook<T>::Codebook(Tensor<T> codes_in, bool enabled)
    : codes(std::move(codes_in)), shift(codes.shape()), shift_enabled(enabled) {
  if (codes.rank() != 2 || codes.dim(0) < 1 || codes.dim(1) < 1) {
    throw ContractViolation("codebook must be a non-empty N x d matrix, got " + shape_str(codes.shape()));
  }
}

template <typename T>
Codebook<T>::Codebook(Tensor<T> codes_in, Tensor<T> shift_in, bool enabled)
    : codes(std::move(codes_in)), shift(std::move(shift_in)), shift_enabled(enabled) {
  if (codes.rank() != 2 || codes.dim(0) < 1 || codes.dim(1) < 1) {
    throw ContractViolation("codebook must be a non-empty N x d matrix, got " + shape_str(codes.shape()));
  }
  if (shift.shape() != codes.shape()) {
    throw ContractViolation("codebook shift " + shape_str(shift.shape()) + " does not match codes " +
                            shape_str(codes.shape()));
  }
}

template <typename T>
Tensor<T> apply_shift(const Codebook<T>& cb) {
  if (!cb.shift_enabled) return cb.codes;
  Tensor<T> out(cb.codes.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cb.codes[i] + cb.shift[i];
  return out;
}

template <typename T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Tensor<T>& table) {
  if (z.rank() != 4) throw ContractViolation("quantize: expected [B, d, m, n] input, got " + shape_str(z.shape()));
  if (table.rank() != 2) throw ContractViolation("quantize: codebook must be N x d");
  const std::int64_t batch = z.dim(0), d = z.dim(1), m = z.dim(2), n = z.dim(3);
  const std::int64_t num_codes = table.dim(0);
  if (table.dim(1) != d) {
    throw ContractViolation("quantize: feature channels " + std::to_string(d) + " != codebook dim " +
                            std::to_string(table.dim(1)));
  }
  if (!z.all_finite()) throw InvalidInput("quantize: non-finite feature values");

  QuantizationResult<T> r;
  r.batch = batch;
  r.height = m;
  r.width = n;
  r.quantized = Tensor<T>(z.shape());
  r.indices.resize(static_cast<std::size_t>(batch * m * n));
  r.distances.resize(r.indices.size());

  const std::int64_t hw = m * n;
  std::vector<T> cell(static_cast<std::size_t>(d));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      for (std::int64_t c = 0; c < d; ++c) cell[static_cast<std::size_t>(c)] = z[static_cast<std::size_t>((b * d + c) * hw + p)];
      std::int32_t best = 0;
      T best_dist = 0;
      for (std::int64_t k = 0; k < num_codes; ++k) {
        const T* code = table.data() + k * d;
        T dist = 0;
        for (std::int64_t c = 0; c < d; ++c) {
          const T diff = cell[static_cast<std::size_t>(c)] - code[c];
          dist += diff * diff;
        }
        if (k == 0 || dist < best_dist) {
          best = static_cast<std::int32_t>(k);
          best_dist = dist;
        }
      }
      const std::size_t slot = static_cast<std::size_t>(b * hw + p);
      r.indices[slot] = best;
      r.distances[slot] = best_dist;
      const T* code = table.data() + best * d;
      for (std::int64_t c = 0; c < d; ++c) r.quantized[static_cast<std::size_t>((b * d + c) * hw + p)] = code[c];
    }
  }
  return r;
}

template <typename T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Codebook<T>& cb) {
  if (!cb.shift_enabled) return quantize(z, cb.codes);
  return quantize(z, apply_shift(cb));
}

template <typename T>
ag::Var<T> straight_through(const ag::Var<T>& z, const QuantizationResult<T>& q) {
  return ag::straight_through(z, ag::constant(q.quantized));
}

template <typename T>
std::vector<IndexGrid> index_grids(const QuantizationResult<T>& q) {
  std::vector<IndexGrid> grids;
  const std::int64_t hw = q.height * q.width;
  for (std::int64_t b = 0; b < q.batch; ++b) {
    IndexGrid g{q.height, q.width, {}};
    g.indices.assign(q.indices.begin() + b * hw, q.indices.begin() + (b + 1) * hw);
    grids.push_back(std::move(g));
  }
  return grids;
}

std::vector<std::int64_t> usage_histogram(std::span<const IndexGrid> grids, std::int64_t num_codes) {
  if (num_codes < 1) throw ContractViolation("usage_histogram: code count must be positive");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_codes), 0);
  for (const auto& g : grids) {
    for (std::int32_t idx : g.indices) {
      if (idx < 0 || idx >= num_codes) {
        throw InvalidInput("usage_histogram: index " + std::to_string(idx) + " outside [0, " +
                           std::to_string(num_codes) + ")");
      }
      ++counts[static_cast<std::size_t>(idx)];
    }
  }
  return counts;
}

double pearson_alignment(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("pearson_alignment: length mismatch");
  if (a.size() < 2) throw ContractViolation("pearson_alignment: need at least two entries");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateStatistics("pearson_alignment: constant input vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pearson_alignment(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
  return pearson_alignment(std::span<const double>(da), std::span<const double>(db));
}

std::vector<std::int64_t> top_k_codes(std::span<const std::int64_t> histogram, std::size_t k) {
  std::vector<std::int64_t> order(histogram.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
    return histogram[static_cast<std::size_t>(x)] > histogram[static_cast<std::size_t>(y)];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

template struct Codebook<float>;
template struct Codebook<double>;
template Tensor<float> apply_shift(const Codebook<float>&);
template Tensor<double> apply_shift(const Codebook<double>&);
template QuantizationResult<float> quantize(const Tensor<float>&, const Tensor<float>&);
template QuantizationResult<double> quantize(const Tensor<double>&, const Tensor<double>&);
template QuantizationResult<float> quantize(const Tensor<float>&, const Codebook<float>&);
template QuantizationResult<double> quantize(const Tensor<double>&, const Codebook<double>&);
template ag::Var<float> straight_through(const ag::Var<float>&, const QuantizationResult<float>&);
template ag::Var<double> straight_through(const ag::Var<double>&, const QuantizationResult<double>&);
template std::vector<IndexGrid> index_grids(const QuantizationResult<float>&);
template std::vector<IndexGrid> index_grids(const QuantizationResult<double>&);

}  // namespace codeenhance
