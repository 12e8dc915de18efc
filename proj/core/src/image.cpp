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

#include "codeenhance/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace codeenhance {

void check_image(const Image& im, const char* what) {
  if (im.rank() != 3 || im.dim(0) != 3 || im.dim(1) < 1 || im.dim(2) < 1) {
    throw ContractViolation(std::string(what) + ": expected a [3, H, W] image, got " + shape_str(im.shape()));
  }
}

namespace {

Image from_interleaved(const std::vector<unsigned char>& rgb, std::int64_t h, std::int64_t w) {
  Image im = make_image(h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        pixel(im, c, y, x) = static_cast<float>(rgb[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
      }
    }
  }
  return im;
}

std::vector<unsigned char> to_interleaved(const Image& im) {
  const std::int64_t h = image_height(im), w = image_width(im);
  std::vector<unsigned char> rgb(static_cast<std::size_t>(h * w * 3));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(pixel(im, c, y, x), 0.0f, 1.0f);
        rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  return rgb;
}

}  // namespace

Image decode_png(std::span<const unsigned char> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IoError(std::string("PNG decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("PNG decode failed: " + msg);
  }
  return from_interleaved(rgb, img.height, img.width);
}

std::pair<std::int64_t, std::int64_t> png_dimensions(std::span<const unsigned char> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IoError(std::string("PNG decode failed: ") + img.message);
  }
  const std::pair<std::int64_t, std::int64_t> dims{img.width, img.height};
  png_image_free(&img);
  return dims;
}

Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const IoError& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

std::vector<unsigned char> encode_png(const Image& im) {
  check_image(im, "encode_png");
  const auto rgb = to_interleaved(im);
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image_width(im));
  img.height = static_cast<png_uint_32>(image_height(im));
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& im) {
  const auto bytes = encode_png(im);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

Tensor<float> to_batch(std::span<const Image> images) {
  if (images.empty()) throw ContractViolation("to_batch: no images");
  const Shape& s = images.front().shape();
  Tensor<float> batch(Shape{static_cast<std::int64_t>(images.size()), s[0], s[1], s[2]});
  std::size_t offset = 0;
  for (const auto& im : images) {
    check_image(im, "to_batch");
    if (im.shape() != s) throw ContractViolation("to_batch: images differ in size");
    std::copy(im.vec().begin(), im.vec().end(), batch.vec().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += im.size();
  }
  return batch;
}

Image from_batch(const Tensor<float>& batch, std::int64_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ContractViolation("from_batch: expected [B, 3, H, W]");
  const std::int64_t n = 3 * batch.dim(2) * batch.dim(3);
  std::vector<float> data(batch.vec().begin() + index * n, batch.vec().begin() + (index + 1) * n);
  return Image(Shape{3, batch.dim(2), batch.dim(3)}, std::move(data));
}

Image crop(const Image& im, std::int64_t top, std::int64_t left, std::int64_t height, std::int64_t width) {
  check_image(im, "crop");
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > image_height(im) ||
      left + width > image_width(im)) {
    throw ContractViolation("crop: window exceeds image bounds");
  }
  Image out = make_image(height, width);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) pixel(out, c, y, x) = pixel(im, c, top + y, left + x);
    }
  }
  return out;
}

Image flip_horizontal(const Image& im) {
  check_image(im, "flip_horizontal");
  const std::int64_t h = image_height(im), w = image_width(im);
  Image out = make_image(h, w);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) pixel(out, c, y, x) = pixel(im, c, y, w - 1 - x);
    }
  }
  return out;
}

Image reflect_pad(const Image& im, std::int64_t pad_bottom, std::int64_t pad_right) {
  check_image(im, "reflect_pad");
  const std::int64_t h = image_height(im), w = image_width(im);
  if (pad_bottom < 0 || pad_right < 0) throw ContractViolation("reflect_pad: negative padding");
  if ((pad_bottom > 0 && pad_bottom >= h) || (pad_right > 0 && pad_right >= w)) {
    throw ContractViolation("reflect_pad: padding must be smaller than the image");
  }
  auto mirror = [](std::int64_t i, std::int64_t n) { return i < n ? i : 2 * (n - 1) - i; };
  Image out = make_image(h + pad_bottom, w + pad_right);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h + pad_bottom; ++y) {
      for (std::int64_t x = 0; x < w + pad_right; ++x) pixel(out, c, y, x) = pixel(im, c, mirror(y, h), mirror(x, w));
    }
  }
  return out;
}

Image resize_bilinear(const Image& im, std::int64_t height, std::int64_t width) {
  check_image(im, "resize_bilinear");
  const std::int64_t h = image_height(im), w = image_width(im);
  if (h == height && w == width) return im;
  Image out = make_image(height, width);
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (std::int64_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (std::int64_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = pixel(im, c, y0, x0) * (1 - wx) + pixel(im, c, y0, x1) * wx;
        const double bot = pixel(im, c, y1, x0) * (1 - wx) + pixel(im, c, y1, x1) * wx;
        pixel(out, c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image clamp01(Image im) {
  for (auto& v : im.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return im;
}

}  // namespace codeenhance
