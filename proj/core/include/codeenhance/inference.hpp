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

// Inference on trained checkpoints and evaluation over paired datasets.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "codeenhance/checkpoint.hpp"
#include "codeenhance/data.hpp"
#include "codeenhance/metrics.hpp"
#include "codeenhance/networks.hpp"

namespace codeenhance {

/// Gray-balanced procedural scene used when no reference image is supplied.
Image neutral_reference(std::int64_t size = 64);

struct EnhanceOptions {
  double omega1 = 1.0;
  double omega2 = 1.0;
  /// Overrides the default neutral reference; resized to the input.
  std::optional<Image> reference;
  /// Overrides the checkpoint's component switches.
  std::optional<ModelToggles> toggles;
};

struct EnhanceOutput {
  Image image;
  double omega1 = 1.0;
  double omega2 = 1.0;
  std::vector<std::pair<std::string, double>> timings_ms;
};

/// Read-only Stage II model. `enhance` is safe to call concurrently.
class Enhancer {
 public:
  explicit Enhancer(const Checkpoint& stage2);

  /// Any size with both sides >= downsample_factor; reflect-padded internally
  /// and cropped back.
  EnhanceOutput enhance(const Image& low_light, const EnhanceOptions& options = {}) const;

  /// Code index grid chosen for `low_light` with the shift on or off.
  IndexGrid code_indices(const Image& low_light, bool use_shift) const;

  const RunConfig& config() const { return config_; }
  const std::string& model_id() const { return model_id_; }
  std::uint64_t parameter_checksum() const { return params_.checksum(); }
  const ParameterStore<float>& parameters() const { return params_; }

 private:
  RunConfig config_;
  std::string model_id_;
  ParameterStore<float> params_;
  std::shared_ptr<const SemanticExtractor<float>> extractor_;
  Image default_reference_;
};

/// Code index grid of a clean image through the Stage I encoder and codes.
IndexGrid stage1_code_indices(const Checkpoint& stage1, const Image& clean);

/// Reflect-pads bottom/right so both sides are multiples of `factor`.
Image pad_to_multiple(const Image& im, int factor);

/// Enhances every pair's low-light image and scores it against the clean one.
MetricReport evaluate_pairs(const Enhancer& model, const std::vector<ImagePair>& pairs,
                            const EnhanceOptions& options = {}, const std::string& label = {});
/// Scores `outputs[i]` against `pairs[i].gt`.
MetricReport evaluate_images(const std::vector<ImagePair>& pairs, const std::vector<Image>& outputs,
                             const std::string& label = {});

/// Usage histograms for clean images through Stage I, and for low-light images
/// through Stage II without and with the shift. When `no_shift_model` is
/// given, the no-shift histogram comes from that separately trained model.
UsageReport usage_report(const Checkpoint& stage1, const Enhancer& model, const std::vector<ImagePair>& pairs,
                         const Enhancer* no_shift_model = nullptr);

}  // namespace codeenhance
