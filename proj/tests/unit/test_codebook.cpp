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

#include <gtest/gtest.h>

#include <numeric>

#include "codeenhance/codebook.hpp"
#include "codeenhance/errors.hpp"
#include "oracles.hpp"

namespace codeenhance {
namespace {

using testing::brute_quantize;
using testing::random_tensor;

Tensor<double> two_codes() { return Tensor<double>(Shape{2, 2}, {0, 0, 1, 1}); }

Tensor<double> single_cell(double a, double b) { return Tensor<double>(Shape{1, 2, 1, 1}, {a, b}); }

TEST(Quantize, NearestCodeAndSquaredDistance) {
  auto q = quantize(single_cell(0.1, 0.2), two_codes());
  EXPECT_EQ(q.index(0, 0, 0), 0);
  EXPECT_NEAR(q.distances[0], 0.05, 1e-15);
  EXPECT_EQ(q.quantized[0], 0.0);
  EXPECT_EQ(q.quantized[1], 0.0);
}

TEST(Quantize, ExactMatchHasZeroDistance) {
  auto q = quantize(single_cell(0, 0), two_codes());
  EXPECT_EQ(q.index(0, 0, 0), 0);
  EXPECT_EQ(q.distances[0], 0.0);
}

TEST(Quantize, TiesResolveToLowestIndex) {
  auto q = quantize(single_cell(0.5, 0.5), two_codes());
  EXPECT_EQ(q.index(0, 0, 0), 0);
  // Duplicated codes: the first copy wins wherever it is nearest.
  Tensor<double> dup(Shape{3, 2}, {5, 5, 1, 1, 1, 1});
  EXPECT_EQ(quantize(single_cell(1, 1), dup).index(0, 0, 0), 1);
}

TEST(Quantize, QuantizedCellsEqualSelectedCodes) {
  std::mt19937_64 rng(3);
  auto z = random_tensor<double>({2, 3, 4, 5}, rng);
  auto table = random_tensor<double>({7, 3}, rng);
  auto q = quantize(z, table);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 5; ++j) {
        const auto k = q.index(b, i, j);
        ASSERT_GE(k, 0);
        ASSERT_LT(k, 7);
        for (std::int64_t c = 0; c < 3; ++c) EXPECT_EQ(q.quantized.at(b, c, i, j), table[k * 3 + c]);
      }
  for (double d : q.distances) EXPECT_GE(d, 0.0);
}

TEST(Quantize, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nd(1, 64), dd(1, 8), sd(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = nd(rng), d = dd(rng);
    auto z = random_tensor<float>({sd(rng), d, sd(rng), sd(rng)}, rng);
    auto table = random_tensor<float>({n, d}, rng);
    auto q = quantize(z, table);
    auto oracle = brute_quantize(z, table);
    ASSERT_EQ(q.indices, oracle.indices) << "trial " << trial;
  }
}

TEST(Quantize, IdempotentOnQuantizedValues) {
  std::mt19937_64 rng(5);
  auto z = random_tensor<double>({1, 4, 3, 3}, rng);
  auto table = random_tensor<double>({16, 4}, rng);
  auto q = quantize(z, table);
  auto again = quantize(q.quantized, table);
  EXPECT_EQ(again.indices, q.indices);
  for (double d : again.distances) EXPECT_EQ(d, 0.0);
}

TEST(Quantize, InvariantUnderUniformPositiveScaling) {
  std::mt19937_64 rng(8);
  auto z = random_tensor<double>({2, 3, 4, 4}, rng);
  auto table = random_tensor<double>({12, 3}, rng);
  const auto base = quantize(z, table).indices;
  for (double s : {0.25, 2.0, 8.0}) {
    Tensor<double> zs = z, ts = table;
    for (auto& v : zs.vec()) v *= s;
    for (auto& v : ts.vec()) v *= s;
    EXPECT_EQ(quantize(zs, ts).indices, base) << "scale " << s;
  }
}

TEST(Quantize, RejectsMismatchedAndNonFiniteInput) {
  EXPECT_THROW(quantize(Tensor<double>(Shape{1, 3, 1, 1}), two_codes()), ContractViolation);
  EXPECT_THROW(quantize(single_cell(std::nan(""), 0), two_codes()), InvalidInput);
  EXPECT_THROW(quantize(single_cell(INFINITY, 0), two_codes()), InvalidInput);
}

TEST(Codebook, ShiftStartsAtZero) {
  Codebook<double> cb(two_codes());
  for (double v : cb.shift.vec()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(cb.shift.shape(), cb.codes.shape());
  EXPECT_EQ(apply_shift(cb), cb.codes);
}

TEST(Codebook, ApplyShiftAddsWhenEnabled) {
  Codebook<double> cb(Tensor<double>(Shape{1, 2}, {1, 2}), Tensor<double>(Shape{1, 2}, {0.5, -0.5}), true);
  auto eff = apply_shift(cb);
  EXPECT_EQ(eff[0], 1.5);
  EXPECT_EQ(eff[1], 1.5);
  cb.shift_enabled = false;
  EXPECT_EQ(apply_shift(cb), cb.codes);
}

TEST(Codebook, RejectsMismatchedShift) {
  EXPECT_THROW(Codebook<double>(two_codes(), Tensor<double>(Shape{2, 3}), true), ContractViolation);
  EXPECT_THROW(Codebook<double>(Tensor<double>(Shape{0, 2})), ContractViolation);
}

TEST(Codebook, DisabledShiftIsBitIdenticalToPlainCodes) {
  std::mt19937_64 rng(21);
  auto z = random_tensor<float>({2, 4, 3, 3}, rng);
  auto codes = random_tensor<float>({10, 4}, rng);
  Codebook<float> cb(codes, random_tensor<float>({10, 4}, rng), false);
  auto a = quantize(z, cb);
  auto b = quantize(z, codes);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(a.quantized, b.quantized);
  EXPECT_EQ(a.distances, b.distances);
}

TEST(StraightThrough, ForwardValueAndIdentityGradient) {
  std::mt19937_64 rng(2);
  auto z = ag::Var<double>::leaf(random_tensor<double>({1, 2, 2, 2}, rng), true);
  auto q = quantize(z.value(), random_tensor<double>({3, 2}, rng));
  auto out = straight_through(z, q);
  EXPECT_EQ(out.value(), q.quantized);
  ag::backward(ag::sum(out));
  for (double g : z.grad().vec()) EXPECT_EQ(g, 1.0);
}

TEST(StraightThrough, SurrogateLossMatchesFiniteDifferences) {
  // Identity Jacobian: d/dz L(st(z)) equals dL/dx evaluated at x = q, which
  // central differences of L around q recover.
  std::mt19937_64 rng(4);
  auto z = ag::Var<double>::leaf(random_tensor<double>({1, 2, 2, 2}, rng), true);
  auto w = ag::constant(random_tensor<double>({1, 2, 2, 2}, rng));
  auto q = quantize(z.value(), random_tensor<double>({3, 2}, rng));
  auto surrogate = [&](const ag::Var<double>& x) { return ag::sum(ag::mul(w, ag::square(x))); };
  ag::backward(surrogate(straight_through(z, q)));

  auto x = ag::Var<double>::leaf(q.quantized, true);
  auto res = testing::check_gradients({x}, [&] { return surrogate(x); });
  ASSERT_TRUE(res.ok) << res.worst;
  for (std::size_t i = 0; i < x.grad().size(); ++i) {
    EXPECT_NEAR(z.grad()[i], x.grad()[i], 1e-4 * std::abs(x.grad()[i]) + 1e-12);
  }
}

TEST(Usage, HistogramCounts) {
  IndexGrid g{1, 2, {0, 0}};
  auto h = usage_histogram(std::span<const IndexGrid>(&g, 1), 2);
  EXPECT_EQ(h, (std::vector<std::int64_t>{2, 0}));
  EXPECT_EQ(usage_histogram({}, 3), (std::vector<std::int64_t>{0, 0, 0}));
  std::vector<IndexGrid> grids{{1, 2, {0, 1}}, {1, 2, {1, 1}}};
  EXPECT_EQ(usage_histogram(grids, 3), (std::vector<std::int64_t>{1, 3, 0}));
}

TEST(Usage, HistogramTotalsEqualCellCount) {
  std::mt19937_64 rng(6);
  auto q = quantize(random_tensor<double>({3, 2, 4, 5}, rng), random_tensor<double>({9, 2}, rng));
  auto grids = index_grids(q);
  ASSERT_EQ(grids.size(), 3u);
  auto h = usage_histogram(grids, 9);
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::int64_t{0}), 3 * 4 * 5);
}

TEST(Usage, OutOfRangeIndexRejected) {
  std::vector<IndexGrid> grids{{1, 1, {5}}};
  EXPECT_THROW(usage_histogram(grids, 3), InvalidInput);
  grids[0].indices[0] = -1;
  EXPECT_THROW(usage_histogram(grids, 3), InvalidInput);
}

TEST(Usage, PearsonAlignmentEndpoints) {
  std::vector<std::int64_t> h1{3, 1, 4, 1, 5, 9};
  std::vector<std::int64_t> h2;
  for (auto v : h1) h2.push_back(20 - 2 * v);
  using S = std::span<const std::int64_t>;
  EXPECT_DOUBLE_EQ(pearson_alignment(S(h1), S(h1)), 1.0);
  EXPECT_DOUBLE_EQ(pearson_alignment(S(h1), S(h2)), -1.0);
  std::vector<std::int64_t> flat(6, 2);
  EXPECT_THROW(pearson_alignment(S(h1), S(flat)), DegenerateStatistics);
}

TEST(Usage, TopKOrdersByCountThenIndex) {
  std::vector<std::int64_t> h{2, 5, 5, 0, 1};
  EXPECT_EQ(top_k_codes(h, 3), (std::vector<std::int64_t>{1, 2, 0}));
  EXPECT_EQ(top_k_codes(h, 10).size(), 5u);
}

}  // namespace
}  // namespace codeenhance
