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
#include <zlib.h>

#include <filesystem>
#include <fstream>

#include "codeenhance/data.hpp"
#include "codeenhance/errors.hpp"
#include "temp_dir.hpp"

namespace codeenhance {
namespace {

namespace fs = std::filesystem;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  put_u32(out, static_cast<std::uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size()))));
}

/// Hand-assembled 8-bit RGB PNG filled with one colour, independent of the
/// library's encoder.
std::vector<unsigned char> solid_png(int w, int h, unsigned char r, unsigned char g, unsigned char b) {
  std::vector<unsigned char> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  put_chunk(png, "IHDR", ihdr);
  std::vector<unsigned char> raw;
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < w; ++x) raw.insert(raw.end(), {r, g, b});
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(len);
  compress(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()));
  z.resize(len);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});
  return png;
}

/// Channel 0 encodes the row, channel 1 the column.
Image coordinate_stamp(std::int64_t h, std::int64_t w) {
  Image im = make_image(h, w);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      pixel(im, 0, y, x) = static_cast<float>(y) / 256.0f;
      pixel(im, 1, y, x) = static_cast<float>(x) / 256.0f;
      pixel(im, 2, y, x) = 0.5f;
    }
  return im;
}

TEST(Png, DecodesEightBitValuesOverTwoFiftyFive) {
  auto png = solid_png(3, 2, 128, 0, 255);
  auto im = decode_png(png);
  ASSERT_EQ(im.shape(), (Shape{3, 2, 3}));
  EXPECT_NEAR(pixel(im, 0, 1, 2), 0.50196, 1e-5);
  EXPECT_EQ(pixel(im, 0, 1, 2), 128.0f / 255.0f);
  EXPECT_EQ(pixel(im, 1, 0, 0), 0.0f);
  EXPECT_EQ(pixel(im, 2, 0, 0), 1.0f);
  EXPECT_EQ(png_dimensions(png), (std::pair<std::int64_t, std::int64_t>{3, 2}));
}

TEST(Png, EncodeDecodeRoundTripsEightBitValues) {
  Image im = make_image(4, 5);
  for (std::size_t i = 0; i < im.size(); ++i) im[i] = static_cast<float>(i % 256) / 255.0f;
  EXPECT_EQ(decode_png(encode_png(im)), im);
}

TEST(Png, RejectsGarbage) {
  std::vector<unsigned char> junk{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_THROW(decode_png(junk), IoError);
  EXPECT_THROW(png_dimensions(junk), IoError);
  EXPECT_THROW(read_png("/nonexistent/file.png"), IoError);
}

TEST(ImageOps, ReflectPadMirrorsWithoutRepeatingTheEdge) {
  auto im = coordinate_stamp(4, 3);
  auto p = reflect_pad(im, 2, 1);
  ASSERT_EQ(p.shape(), (Shape{3, 6, 4}));
  EXPECT_EQ(pixel(p, 0, 4, 0), pixel(im, 0, 2, 0));
  EXPECT_EQ(pixel(p, 0, 5, 0), pixel(im, 0, 1, 0));
  EXPECT_EQ(pixel(p, 1, 0, 3), pixel(im, 1, 0, 1));
  EXPECT_THROW(reflect_pad(im, 4, 0), ContractViolation);
}

TEST(ImageOps, ResizeKeepsConstantsAndIdentity) {
  auto im = coordinate_stamp(5, 7);
  EXPECT_EQ(resize_bilinear(im, 5, 7), im);
  auto flat = resize_bilinear(make_image(3, 4, 0.25f), 9, 2);
  for (float v : flat.vec()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(ImageOps, BatchRoundTrip) {
  std::vector<Image> ims{coordinate_stamp(2, 3), make_image(2, 3, 0.5f)};
  auto b = to_batch(ims);
  EXPECT_EQ(b.shape(), (Shape{2, 3, 2, 3}));
  EXPECT_EQ(from_batch(b, 1), ims[1]);
  EXPECT_EQ(flip_horizontal(flip_horizontal(ims[0])), ims[0]);
}

class PairDir : public ::testing::Test {
 protected:
  testing::TempDir dir;
  void put(const std::string& side, const std::string& name, std::int64_t size = 8, float v = 0.5f) {
    fs::create_directories(dir.path() / side);
    write_png(dir.path() / side / name, make_image(size, size, v));
  }
};

TEST_F(PairDir, MatchedFilesPairInIdOrder) {
  put("low", "b.png");
  put("high", "b.png");
  put("low", "a.png", 8, 0.1f);
  put("high", "a.png", 8, 0.9f);
  auto pairs = load_pairs(dir.path());
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].id, "a");
  EXPECT_EQ(pairs[1].id, "b");
  EXPECT_NEAR(pairs[0].ll[0], 0.1f, 1.0f / 255);
  EXPECT_NEAR(pairs[0].gt[0], 0.9f, 1.0f / 255);
}

TEST_F(PairDir, OrphanIsNamed) {
  put("low", "a.png");
  put("high", "a.png");
  put("low", "x.png");
  try {
    load_pairs(dir.path());
    FAIL() << "expected PairingError";
  } catch (const PairingError& e) {
    EXPECT_NE(std::string(e.what()).find("low/x.png"), std::string::npos) << e.what();
  }
}

TEST_F(PairDir, SizeMismatchIsAPairingError) {
  put("low", "a.png", 8);
  put("high", "a.png", 16);
  EXPECT_THROW(load_pairs(dir.path()), PairingError);
}

TEST_F(PairDir, UnreadableImageNamesThePath) {
  put("high", "a.png");
  fs::create_directories(dir.path() / "low");
  std::ofstream(dir.path() / "low" / "a.png") << "not a png";
  try {
    load_pairs(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos);
  }
}

TEST_F(PairDir, ManifestResolvesRelativePaths) {
  put("x", "one_ll.png", 8, 0.2f);
  put("x", "one_gt.png", 8, 0.8f);
  std::ofstream(dir.path() / "pairs.tsv") << "# comment\nx/one_ll.png\tx/one_gt.png\n";
  auto pairs = load_pairs(dir.path(), dir.path() / "pairs.tsv");
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_NEAR(pairs[0].ll[0], 0.2f, 1.0f / 255);
  std::ofstream(dir.path() / "bad.tsv") << "x/one_ll.png x/one_gt.png\n";
  EXPECT_THROW(load_pairs(dir.path(), dir.path() / "bad.tsv"), PairingError);
}

TEST(CropPair, SharedWindowPreservesAlignment) {
  ImagePair p{coordinate_stamp(20, 30), coordinate_stamp(20, 30), "stamp"};
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t size = 1 + trial % 20;
    auto c = crop_pair(p, size, rng);
    ASSERT_EQ(c.ll, c.gt);
    const auto top = std::lround(pixel(c.ll, 0, 0, 0) * 256), left = std::lround(pixel(c.ll, 1, 0, 0) * 256);
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        ASSERT_EQ(std::lround(pixel(c.gt, 0, y, x) * 256), top + y);
        ASSERT_EQ(std::lround(pixel(c.gt, 1, y, x) * 256), left + x);
      }
  }
}

TEST(CropPair, FullWindowDeterminismAndBounds) {
  ImagePair p{coordinate_stamp(8, 8), coordinate_stamp(8, 8), "s"};
  std::mt19937_64 rng(2);
  EXPECT_EQ(crop_pair(p, 8, rng).ll, p.ll);
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(crop_pair(p, 3, r1).ll, crop_pair(p, 3, r2).ll);
  EXPECT_THROW(crop_pair(p, 9, rng), ContractViolation);
}

TEST(CropPair, AugmentFlipsBothImagesTogether) {
  ImagePair p{coordinate_stamp(8, 8), coordinate_stamp(8, 8), "s"};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    auto a = augment_pair(p, 4, rng);
    EXPECT_EQ(a.ll, a.gt);
  }
}

TEST(SynthLowlight, IdentityDegradation) {
  std::mt19937_64 rng(4);
  auto gt = synth_scene(16, rng);
  auto pair = synth_lowlight(gt, DegradeParams{}, rng, "scene");
  EXPECT_EQ(pair.ll, gt);
  EXPECT_EQ(pair.gt, gt);
}

TEST(SynthLowlight, GainHandValue) {
  std::mt19937_64 rng(5);
  DegradeParams p;
  p.gain = 0.25;
  auto pair = synth_lowlight(make_image(2, 2, 0.8f), p, rng);
  for (float v : pair.ll.vec()) EXPECT_NEAR(v, 0.2f, 1e-7);
}

TEST(SynthLowlight, NoisyDegradationIsReproducibleAndInRange) {
  DegradeParams p;
  p.gamma = 2.2;
  p.gain = 0.25;
  p.noise_sigma = 0.05;
  p.color_shift = {0.9, 1.0, 0.8};
  std::mt19937_64 scene_rng(6);
  auto gt = synth_scene(32, scene_rng);
  std::mt19937_64 r1(7), r2(7), r3(8);
  auto a = synth_lowlight(gt, p, r1, "g");
  auto b = synth_lowlight(gt, p, r2, "g");
  EXPECT_EQ(a.ll, b.ll);
  EXPECT_NE(a.ll, synth_lowlight(gt, p, r3, "g").ll);
  for (float v : a.ll.vec()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  EXPECT_EQ(a.id, "g|" + p.tag());
  validate_pair(a);
}

TEST(SynthLowlight, SampledParametersStayInRange) {
  DegradeRanges r;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    auto p = sample_degrade_params(r, rng);
    EXPECT_GE(p.gamma, r.gamma_min);
    EXPECT_LE(p.gamma, r.gamma_max);
    EXPECT_GE(p.gain, r.gain_min);
    EXPECT_LE(p.gain, r.gain_max);
    EXPECT_GE(p.noise_sigma, r.noise_min);
    EXPECT_LE(p.noise_sigma, r.noise_max);
    for (double c : p.color_shift) {
      EXPECT_GE(c, r.color_min);
      EXPECT_LE(c, r.color_max);
    }
  }
  DegradeParams bad;
  bad.gain = 0;
  EXPECT_THROW(bad.validate(), ContractViolation);
}

TEST(SynthScenes, DeterministicPerSeedAndPerItem) {
  EXPECT_EQ(synth_scenes(3, 16, 5), synth_scenes(3, 16, 5));
  auto a = synth_scenes(3, 16, 5);
  EXPECT_NE(a[0], a[1]);
  EXPECT_NE(a[0], synth_scenes(1, 16, 6)[0]);
  for (const auto& im : a)
    for (float v : im.vec()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  auto r1 = item_rng(1, 2), r2 = item_rng(1, 2), r3 = item_rng(1, 3);
  EXPECT_EQ(r1(), r2());
  EXPECT_NE(item_rng(1, 2)(), r3());
}

}  // namespace
}  // namespace codeenhance
