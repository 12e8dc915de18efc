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


#include <benchmark/benchmark.h>

#include <random>

#include "codeenhance/codebook.hpp"
#include "codeenhance/inference.hpp"
#include "codeenhance/networks.hpp"
#include "codeenhance/training.hpp"

namespace codeenhance {
namespace {

template <typename T>
Tensor<T> uniform(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

void BM_Quantize(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto codes = state.range(0);
  const auto z = uniform<float>({4, 32, 8, 8}, rng);
  const auto table = uniform<float>({codes, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(z, table).indices.data());
  state.SetItemsProcessed(state.iterations() * 4 * 8 * 8);
}
BENCHMARK(BM_Quantize)->Arg(64)->Arg(1024);

void BM_Conv3x3(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto c = state.range(0);
  const auto x = ag::constant(uniform<float>({1, c, 64, 64}, rng));
  const auto w = ag::constant(uniform<float>({c, c, 3, 3}, rng));
  const auto b = ag::constant(uniform<float>({c}, rng));
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d(x, w, b, 1, 1).value().data());
}
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Stage1Step(benchmark::State& state) {
  RunConfig cfg;
  auto s = init_stage1(cfg);
  const auto data = load_training_data(cfg.data);
  for (auto _ : state) {
    const auto batch = sample_batch(s, data);
    benchmark::DoNotOptimize(train_stage1_step(s, batch.clean).iteration);
  }
}
BENCHMARK(BM_Stage1Step)->Unit(benchmark::kMillisecond);

void BM_Enhance(benchmark::State& state) {
  RunConfig cfg;
  const Enhancer model(make_checkpoint(init_stage2(cfg, make_checkpoint(init_stage1(cfg)))));
  std::mt19937_64 rng(3);
  const auto size = state.range(0);
  const Image im = uniform<float>({3, size, size}, rng, 0, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(model.enhance(im).image.data());
}
BENCHMARK(BM_Enhance)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace codeenhance

BENCHMARK_MAIN();
