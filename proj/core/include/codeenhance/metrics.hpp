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

// Full-reference quality metrics and evaluation reports.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "codeenhance/image.hpp"

namespace codeenhance {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// 10 log10(1 / MSE) with peak 1; +infinity for identical inputs.
double psnr(const Tensor<float>& a, const Tensor<float>& b);
/// Mean absolute difference over every element.
double mae(const Tensor<float>& a, const Tensor<float>& b);
/// Mean local SSIM of the BT.601 luma planes over fully covered windows.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

/// BT.601 luma plane [H, W] in double precision.
Tensor<double> luma(const Image& im);
/// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_taps(int window, double sigma);

struct ImageMetrics {
  std::string id;
  double psnr = 0;
  double ssim = 0;
  double mae = 0;
};

ImageMetrics measure(const std::string& id, const Image& output, const Image& reference);

/// Code-usage comparison: GT reconstructions through the Stage I path against
/// low-light enhancement without and with the codebook shift.
struct UsageReport {
  std::vector<std::int64_t> gt_usage;
  std::vector<std::int64_t> no_shift_usage;
  std::vector<std::int64_t> shift_usage;
  double alignment_no_shift = 0;
  double alignment_shift = 0;
  /// (code, count) of the ten most used codes in each histogram.
  std::vector<std::pair<std::int32_t, std::int64_t>> top_gt, top_no_shift, top_shift;
};

UsageReport make_usage_report(std::vector<std::int64_t> gt_usage, std::vector<std::int64_t> no_shift_usage,
                              std::vector<std::int64_t> shift_usage);

struct MetricReport {
  std::string label;
  std::vector<ImageMetrics> images;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double mean_mae = 0;
  std::optional<UsageReport> usage;

  void add(ImageMetrics m);
  /// Recomputes the aggregate means from the per-image entries.
  void finalize();
  /// Per-image array plus aggregates; infinite PSNR is written as "inf".
  std::string to_json() const;
  std::string to_text() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace codeenhance
