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

#include "codeenhance/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace codeenhance {

namespace fs = std::filesystem;

void validate_pair(const ImagePair& pair) {
  check_image(pair.ll, "pair.ll");
  check_image(pair.gt, "pair.gt");
  if (pair.ll.shape() != pair.gt.shape()) {
    throw ContractViolation("pair '" + pair.id + "': ll " + shape_str(pair.ll.shape()) + " vs gt " +
                            shape_str(pair.gt.shape()));
  }
  auto in_range = [](const Image& im) {
    return std::all_of(im.vec().begin(), im.vec().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  };
  if (!in_range(pair.ll) || !in_range(pair.gt)) {
    throw ContractViolation("pair '" + pair.id + "': values outside [0, 1]");
  }
}

void DegradeParams::validate() const {
  if (!(gamma > 0)) throw ContractViolation("degrade gamma must be > 0");
  if (!(gain > 0 && gain <= 1)) throw ContractViolation("degrade gain must be in (0, 1]");
  if (!(noise_sigma >= 0)) throw ContractViolation("degrade noise_sigma must be >= 0");
  for (double c : color_shift) {
    if (!(c >= 0) || !std::isfinite(c)) throw ContractViolation("degrade color_shift must be finite and >= 0");
  }
}

std::string DegradeParams::tag() const {
  return fmt::format("g={:.4g},k={:.4g},s={:.4g},c={:.4g},{:.4g},{:.4g}", gamma, gain, noise_sigma, color_shift[0],
                     color_shift[1], color_shift[2]);
}

DegradeParams sample_degrade_params(const DegradeRanges& r, std::mt19937_64& rng) {
  auto uni = [&rng](double lo, double hi) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return lo + (hi - lo) * u;
  };
  DegradeParams p;
  p.gamma = uni(r.gamma_min, r.gamma_max);
  p.gain = uni(r.gain_min, r.gain_max);
  p.noise_sigma = uni(r.noise_min, r.noise_max);
  for (auto& c : p.color_shift) c = uni(r.color_min, r.color_max);
  return p;
}

namespace {

std::vector<ImagePair> load_from_dirs(const fs::path& root) {
  const fs::path low = root / "low", high = root / "high";
  for (const auto& dir : {low, high}) {
    if (!fs::is_directory(dir)) throw IoError("missing directory '" + dir.string() + "'");
  }
  auto list = [](const fs::path& dir) {
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png") names.insert(entry.path().filename().string());
    }
    return names;
  };
  const auto low_names = list(low), high_names = list(high);
  std::vector<std::string> orphans;
  for (const auto& n : low_names) {
    if (!high_names.count(n)) orphans.push_back("low/" + n);
  }
  for (const auto& n : high_names) {
    if (!low_names.count(n)) orphans.push_back("high/" + n);
  }
  if (!orphans.empty()) {
    std::string list_str;
    for (const auto& o : orphans) list_str += (list_str.empty() ? "" : ", ") + o;
    throw PairingError("unmatched files: " + list_str);
  }
  std::vector<ImagePair> pairs;
  for (const auto& n : low_names) {
    ImagePair p{read_png(low / n), read_png(high / n), fs::path(n).stem().string()};
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<ImagePair> load_from_manifest(const fs::path& root, const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const fs::path base = manifest.has_parent_path() ? manifest.parent_path() : root;
  auto resolve = [&base](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::vector<ImagePair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw PairingError(fmt::format("manifest '{}' line {}: expected 'll_path<TAB>gt_path'", manifest.string(),
                                     line_no));
    }
    const fs::path ll = resolve(line.substr(0, tab)), gt = resolve(line.substr(tab + 1));
    for (const auto& p : {ll, gt}) {
      if (!fs::exists(p)) throw PairingError("manifest entry has no file: " + p.string());
    }
    pairs.push_back(ImagePair{read_png(ll), read_png(gt), ll.stem().string()});
  }
  return pairs;
}

}  // namespace

std::vector<ImagePair> load_pairs(const fs::path& root, const std::optional<fs::path>& manifest) {
  auto pairs = manifest ? load_from_manifest(root, *manifest) : load_from_dirs(root);
  std::sort(pairs.begin(), pairs.end(), [](const ImagePair& a, const ImagePair& b) { return a.id < b.id; });
  for (const auto& p : pairs) {
    if (p.ll.shape() != p.gt.shape()) {
      throw PairingError("pair '" + p.id + "' has mismatched sizes " + shape_str(p.ll.shape()) + " and " +
                         shape_str(p.gt.shape()));
    }
  }
  return pairs;
}

ImagePair crop_pair(const ImagePair& pair, std::int64_t size, std::mt19937_64& rng) {
  validate_pair(pair);
  const std::int64_t h = image_height(pair.gt), w = image_width(pair.gt);
  if (size < 1 || size > h || size > w) {
    throw ContractViolation(fmt::format("crop size {} does not fit pair '{}' of {}x{}", size, pair.id, h, w));
  }
  const auto top = std::uniform_int_distribution<std::int64_t>(0, h - size)(rng);
  const auto left = std::uniform_int_distribution<std::int64_t>(0, w - size)(rng);
  return ImagePair{crop(pair.ll, top, left, size, size), crop(pair.gt, top, left, size, size), pair.id};
}

ImagePair flip_pair(const ImagePair& pair) {
  return ImagePair{flip_horizontal(pair.ll), flip_horizontal(pair.gt), pair.id};
}

ImagePair augment_pair(const ImagePair& pair, std::int64_t crop_size, std::mt19937_64& rng) {
  ImagePair out = crop_pair(pair, crop_size, rng);
  if (std::bernoulli_distribution(0.5)(rng)) out = flip_pair(out);
  return out;
}

ImagePair synth_lowlight(const Image& gt, const DegradeParams& p, std::mt19937_64& rng, const std::string& gt_id) {
  check_image(gt, "synth_lowlight");
  p.validate();
  const std::int64_t h = image_height(gt), w = image_width(gt);
  Image ll = make_image(h, w);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double g = std::clamp(static_cast<double>(pixel(gt, c, y, x)), 0.0, 1.0);
        double v = p.color_shift[static_cast<std::size_t>(c)] * (p.gain * std::pow(g, p.gamma));
        if (p.noise_sigma > 0) v += p.noise_sigma * noise(rng);
        pixel(ll, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return ImagePair{std::move(ll), gt, gt_id + "|" + p.tag()};
}

Image synth_scene(std::int64_t size, std::mt19937_64& rng) {
  auto uni = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::array<std::array<double, 3>, 4> corners{};
  for (auto& corner : corners) {
    for (auto& v : corner) v = uni(0.25, 0.9);
  }
  struct Blob {
    double cy, cx, radius;
    std::array<double, 3> color;
    bool square;
  };
  const int blobs = static_cast<int>(uni(2, 5));
  std::vector<Blob> shapes;
  for (int i = 0; i < blobs; ++i) {
    shapes.push_back(Blob{uni(0, 1), uni(0, 1), uni(0.1, 0.3), {uni(0.05, 1), uni(0.05, 1), uni(0.05, 1)},
                          uni(0, 1) < 0.5});
  }
  const double stripe_freq = uni(3, 10), stripe_angle = uni(0, std::numbers::pi), stripe_amp = uni(0.0, 0.12);

  Image im = make_image(size, size);
  for (std::int64_t y = 0; y < size; ++y) {
    const double v = (y + 0.5) / size;
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size;
      const double stripe =
          stripe_amp * std::sin(2 * std::numbers::pi * stripe_freq * (u * std::cos(stripe_angle) + v * std::sin(stripe_angle)));
      for (int c = 0; c < 3; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        double val = (1 - u) * (1 - v) * corners[0][ci] + u * (1 - v) * corners[1][ci] + (1 - u) * v * corners[2][ci] +
                     u * v * corners[3][ci];
        for (const auto& s : shapes) {
          const double dy = v - s.cy, dx = u - s.cx;
          const double dist = s.square ? std::max(std::abs(dy), std::abs(dx)) : std::hypot(dy, dx);
          const double weight = 1.0 / (1.0 + std::exp((dist - s.radius) * 60.0));
          val = (1 - weight) * val + weight * s.color[ci];
        }
        pixel(im, c, y, x) = static_cast<float>(std::clamp(val + stripe, 0.0, 1.0));
      }
    }
  }
  return im;
}

std::vector<Image> synth_scenes(int count, std::int64_t size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto rng = item_rng(seed, static_cast<std::uint64_t>(i));
    out.push_back(synth_scene(size, rng));
  }
  return out;
}

std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace codeenhance
