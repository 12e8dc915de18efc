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

#include <limits>

#include "codeenhance/errors.hpp"
#include "codeenhance/inference.hpp"
#include "fixtures.hpp"

namespace codeenhance {
namespace {

class EnhancerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    stage1_ = new Checkpoint(testing::tiny_stage1_checkpoint());
    auto state = init_stage2(testing::tiny_run_config(), *stage1_);
    run_training(state, load_training_data(state.config.data), 2);
    stage2_ = new Checkpoint(make_checkpoint(state));
    model_ = new Enhancer(*stage2_);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete stage2_;
    delete stage1_;
  }
  static Image input(std::int64_t h, std::int64_t w, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    return testing::random_tensor<float>({3, h, w}, rng, 0.0, 0.3);
  }
  static Checkpoint* stage1_;
  static Checkpoint* stage2_;
  static Enhancer* model_;
};
Checkpoint* EnhancerTest::stage1_ = nullptr;
Checkpoint* EnhancerTest::stage2_ = nullptr;
Enhancer* EnhancerTest::model_ = nullptr;

TEST_F(EnhancerTest, OutputMatchesInputSizeAndRange) {
  for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{16, 16}, {17, 23}, {5, 9}, {32, 20}}) {
    const auto out = model_->enhance(input(h, w)).image;
    ASSERT_EQ(out.shape(), (Shape{3, h, w}));
    for (float v : out.vec()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST_F(EnhancerTest, OddSizesMatchThePaddedComputation) {
  const auto im = input(17, 23, 2);
  const auto padded = pad_to_multiple(im, 4);
  ASSERT_EQ(padded.shape(), (Shape{3, 20, 24}));
  EXPECT_EQ(pixel(padded, 0, 18, 5), pixel(im, 0, 14, 5));
  EXPECT_EQ(pixel(padded, 1, 3, 23), pixel(im, 1, 3, 21));
  EXPECT_EQ(pad_to_multiple(padded, 4).vec(), padded.vec());
  EnhanceOptions opt;
  opt.reference = neutral_reference(64);
  const auto direct = model_->enhance(im, opt).image;
  const auto full = model_->enhance(padded, opt).image;
  EXPECT_EQ(direct.vec(), crop(full, 0, 0, 17, 23).vec());
}

TEST_F(EnhancerTest, Deterministic) {
  const auto im = input(16, 16, 3);
  EXPECT_EQ(model_->enhance(im).image.vec(), model_->enhance(im).image.vec());
  EXPECT_EQ(Enhancer(*stage2_).enhance(im).image.vec(), model_->enhance(im).image.vec());
}

TEST_F(EnhancerTest, ZeroOmegasEqualTheTransferFreePath) {
  const auto im = input(16, 16, 4);
  EnhanceOptions zero;
  zero.omega1 = zero.omega2 = 0.0;
  EnhanceOptions no_cpt;
  no_cpt.toggles = stage2_->config.toggles;
  no_cpt.toggles->use_cpt = false;
  EXPECT_EQ(model_->enhance(im, zero).image.vec(), model_->enhance(im, no_cpt).image.vec());
}

TEST_F(EnhancerTest, OmegasAndReferenceChangeTheOutput) {
  const auto im = input(16, 16, 5);
  EnhanceOptions base;
  const auto a = model_->enhance(im, base).image;
  EnhanceOptions o2 = base;
  o2.omega2 = 1.8;
  EXPECT_NE(model_->enhance(im, o2).image.vec(), a.vec());
  EnhanceOptions o1 = base;
  o1.omega1 = 0.2;
  EXPECT_NE(model_->enhance(im, o1).image.vec(), a.vec());
  EnhanceOptions bright = base;
  bright.reference = make_image(16, 16, 0.9f);
  EXPECT_NE(model_->enhance(im, bright).image.vec(), a.vec());
  const auto echoed = model_->enhance(im, o2);
  EXPECT_EQ(echoed.omega2, 1.8);
  EXPECT_FALSE(echoed.timings_ms.empty());
}

TEST_F(EnhancerTest, InvalidInputs) {
  EXPECT_THROW(model_->enhance(input(3, 16)), InvalidInput);
  auto nan = input(16, 16);
  nan[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(model_->enhance(nan), InvalidInput);
  EnhanceOptions inf;
  inf.omega1 = std::numeric_limits<double>::infinity();
  EXPECT_THROW(model_->enhance(input(16, 16), inf), InvalidInput);
}

TEST_F(EnhancerTest, RequiresStage2Checkpoint) {
  EXPECT_THROW(Enhancer{*stage1_}, ConfigurationError);
}

TEST_F(EnhancerTest, ParametersAreReadOnlyDuringInference) {
  const auto before = model_->parameter_checksum();
  model_->enhance(input(16, 16, 6));
  EXPECT_EQ(model_->parameter_checksum(), before);
  EXPECT_EQ(model_->model_id(), stage2_->model_id());
}

TEST_F(EnhancerTest, CodeIndicesWithoutShiftIgnoreTheShift) {
  const auto im = input(16, 16, 7);
  const auto grid = model_->code_indices(im, false);
  EXPECT_EQ(grid.height, 4);
  EXPECT_EQ(grid.width, 4);
  Checkpoint zeroed = *stage2_;
  for (auto& t : zeroed.tensors) {
    if (t.name == "codebook.shift") t.value.fill(0.0f);
  }
  const Enhancer plain(zeroed);
  EXPECT_EQ(plain.code_indices(im, true).indices, grid.indices);
  EXPECT_EQ(plain.code_indices(im, false).indices, grid.indices);
}

TEST_F(EnhancerTest, EvaluationAndUsageReports) {
  const auto data = load_training_data(stage2_->config.data);
  const auto report = evaluate_pairs(*model_, data.pairs, {}, "tiny");
  EXPECT_EQ(report.images.size(), data.pairs.size());
  EXPECT_EQ(report.label, "tiny");
  EXPECT_EQ(report.images[0].id, data.pairs[0].id);
  std::vector<Image> identity;
  for (const auto& p : data.pairs) identity.push_back(p.gt);
  EXPECT_TRUE(std::isinf(evaluate_images(data.pairs, identity).mean_psnr));
  EXPECT_THROW(evaluate_images(data.pairs, {}), ContractViolation);

  const auto grids = stage1_code_indices(*stage1_, data.pairs[0].gt);
  EXPECT_EQ(grids.indices.size(), 16u);
  EXPECT_THROW(usage_report(*stage2_, *model_, data.pairs), ConfigurationError);
  try {
    const auto usage = usage_report(*stage1_, *model_, data.pairs);
    std::int64_t total = 0;
    for (auto c : usage.gt_usage) total += c;
    EXPECT_EQ(total, static_cast<std::int64_t>(data.pairs.size() * 16));
  } catch (const DegenerateStatistics&) {
    GTEST_SKIP() << "a tiny model can use a single code";
  }
}

TEST(NeutralReference, GrayAndInRange) {
  const auto ref = neutral_reference(32);
  ASSERT_EQ(ref.shape(), (Shape{3, 32, 32}));
  for (std::int64_t y = 0; y < 32; ++y)
    for (std::int64_t x = 0; x < 32; ++x) {
      EXPECT_EQ(pixel(ref, 0, y, x), pixel(ref, 1, y, x));
      EXPECT_EQ(pixel(ref, 1, y, x), pixel(ref, 2, y, x));
    }
}

}  // namespace
}  // namespace codeenhance
