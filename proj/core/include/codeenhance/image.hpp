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

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "codeenhance/tensor.hpp"

namespace codeenhance {

/// RGB image as a [3, H, W] float tensor with values in [0, 1].
using Image = Tensor<float>;

inline Image make_image(std::int64_t height, std::int64_t width, float fill = 0.0f) {
  return Image(Shape{3, height, width}, fill);
}
inline std::int64_t image_height(const Image& im) { return im.dim(1); }
inline std::int64_t image_width(const Image& im) { return im.dim(2); }
inline float& pixel(Image& im, int c, std::int64_t y, std::int64_t x) {
  return im[static_cast<std::size_t>((c * im.dim(1) + y) * im.dim(2) + x)];
}
inline float pixel(const Image& im, int c, std::int64_t y, std::int64_t x) {
  return im[static_cast<std::size_t>((c * im.dim(1) + y) * im.dim(2) + x)];
}

/// Throws ContractViolation unless the tensor is [3, H, W].
void check_image(const Image& im, const char* what);

// 8-bit RGB PNG; decoded values are byte / 255.
Image read_png(const std::filesystem::path& path);
Image decode_png(std::span<const unsigned char> bytes);
/// Width and height from the PNG header without decoding pixels.
std::pair<std::int64_t, std::int64_t> png_dimensions(std::span<const unsigned char> bytes);
void write_png(const std::filesystem::path& path, const Image& im);
std::vector<unsigned char> encode_png(const Image& im);

/// Stacks equally sized images into a [B, 3, H, W] batch.
Tensor<float> to_batch(std::span<const Image> images);
Image from_batch(const Tensor<float>& batch, std::int64_t index);

Image crop(const Image& im, std::int64_t top, std::int64_t left, std::int64_t height, std::int64_t width);
Image flip_horizontal(const Image& im);
/// Mirror padding (edge not repeated) on the bottom and right.
Image reflect_pad(const Image& im, std::int64_t pad_bottom, std::int64_t pad_right);
Image resize_bilinear(const Image& im, std::int64_t height, std::int64_t width);
Image clamp01(Image im);

}  // namespace codeenhance
