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

// Paired datasets, aligned augmentation and synthetic low-light degradation.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "codeenhance/image.hpp"

namespace codeenhance {

struct ImagePair {
  Image ll;
  Image gt;
  std::string id;
};

/// Throws ContractViolation unless both images share a shape and lie in [0, 1].
void validate_pair(const ImagePair& pair);

struct DegradeParams {
  double gamma = 1.0;
  double gain = 1.0;
  double noise_sigma = 0.0;
  std::array<double, 3> color_shift{1.0, 1.0, 1.0};

  void validate() const;
  /// Compact "g=..,k=..,s=..,c=..,..,.." tag appended to pair ids.
  std::string tag() const;
};

struct DegradeRanges {
  double gamma_min = 1.5, gamma_max = 3.5;
  double gain_min = 0.1, gain_max = 0.5;
  double noise_min = 0.0, noise_max = 0.05;
  double color_min = 0.8, color_max = 1.0;
};

DegradeParams sample_degrade_params(const DegradeRanges& ranges, std::mt19937_64& rng);

/// Pairs from root/low + root/high (matching file names) or from a manifest of
/// tab-separated "ll_path<TAB>gt_path" lines, relative paths resolved against
/// the manifest's directory. Sorted by id.
std::vector<ImagePair> load_pairs(const std::filesystem::path& root,
                                  const std::optional<std::filesystem::path>& manifest = std::nullopt);

/// Same random window for both images.
ImagePair crop_pair(const ImagePair& pair, std::int64_t size, std::mt19937_64& rng);
ImagePair flip_pair(const ImagePair& pair);
/// Random crop followed by a coin-flip horizontal mirror.
ImagePair augment_pair(const ImagePair& pair, std::int64_t crop, std::mt19937_64& rng);

/// ll = clip(color_shift * (gain * gt^gamma) + N(0, noise_sigma)).
ImagePair synth_lowlight(const Image& gt, const DegradeParams& p, std::mt19937_64& rng,
                         const std::string& gt_id = "synthetic");

/// Procedural well-exposed scene: smooth colour gradient, soft shapes and
/// stripe texture.
Image synth_scene(std::int64_t size, std::mt19937_64& rng);
std::vector<Image> synth_scenes(int count, std::int64_t size, std::uint64_t seed);

/// Independent generator for item `index` of a run seeded with `seed`.
std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t index);

}  // namespace codeenhance
