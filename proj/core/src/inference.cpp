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

#include "codeenhance/inference.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace codeenhance {

using ag::Var;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

Var<float> as_batch(const Image& im) {
  return ag::constant(im.reshaped(Shape{1, 3, image_height(im), image_width(im)}));
}

void check_enhanceable(const Image& im, int factor, const char* what) {
  check_image(im, what);
  if (image_height(im) < factor || image_width(im) < factor) {
    throw InvalidInput(fmt::format("{}: image {}x{} is smaller than the {}-pixel minimum", what, image_width(im),
                                   image_height(im), factor));
  }
  for (float v : im.vec()) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + ": non-finite pixel value");
  }
}

}  // namespace

Image neutral_reference(std::int64_t size) {
  Image im = make_image(size, size);
  for (std::int64_t y = 0; y < size; ++y) {
    const double v = (y + 0.5) / static_cast<double>(size);
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = (x + 0.5) / static_cast<double>(size);
      double lum = 0.3 + 0.4 * (0.5 * u + 0.5 * v);
      lum += 0.08 * std::sin(2 * std::numbers::pi * 3 * u) * std::cos(2 * std::numbers::pi * 2 * v);
      const double d1 = std::hypot(u - 0.3, v - 0.35), d2 = std::hypot(u - 0.72, v - 0.7);
      lum += 0.15 / (1 + std::exp((d1 - 0.15) * 40)) - 0.15 / (1 + std::exp((d2 - 0.12) * 40));
      const auto value = static_cast<float>(std::clamp(lum, 0.0, 1.0));
      for (int c = 0; c < 3; ++c) pixel(im, c, y, x) = value;
    }
  }
  return im;
}

Image pad_to_multiple(const Image& im, int factor) {
  const std::int64_t h = image_height(im), w = image_width(im);
  const std::int64_t pad_h = (factor - h % factor) % factor, pad_w = (factor - w % factor) % factor;
  if (pad_h == 0 && pad_w == 0) return im;
  return reflect_pad(im, pad_h, pad_w);
}

Enhancer::Enhancer(const Checkpoint& stage2)
    : config_(stage2.config), model_id_(stage2.model_id()), params_(stage2.parameters()) {
  if (stage2.stage != 2) {
    throw ConfigurationError(fmt::format("enhancement needs a Stage II checkpoint, got stage {}", stage2.stage));
  }
  for (const auto& n : params_.names()) params_.get(n).set_requires_grad(false);
  extractor_ = std::make_shared<PyramidExtractor<float>>(config_.network);
  default_reference_ = neutral_reference(config_.network.image_size);
}

EnhanceOutput Enhancer::enhance(const Image& low_light, const EnhanceOptions& options) const {
  const int factor = config_.network.downsample_factor;
  check_enhanceable(low_light, factor, "image");
  if (!std::isfinite(options.omega1) || !std::isfinite(options.omega2)) {
    throw InvalidInput("omega values must be finite");
  }
  EnhanceOutput out;
  out.omega1 = options.omega1;
  out.omega2 = options.omega2;

  auto t0 = Clock::now();
  const Image padded = pad_to_multiple(low_light, factor);
  const std::int64_t ph = image_height(padded), pw = image_width(padded);
  const Image& ref_src = options.reference ? *options.reference : default_reference_;
  if (options.reference) check_image(*options.reference, "reference");
  const Image reference = resize_bilinear(ref_src, ph, pw);
  out.timings_ms.emplace_back("preprocess", elapsed_ms(t0));

  t0 = Clock::now();
  const ModelToggles toggles = options.toggles.value_or(config_.toggles);
  Var<float> ref_skip;
  if (toggles.use_cpt) ref_skip = encode(params_, "hq_encoder", config_.network, as_batch(reference)).skip;
  out.timings_ms.emplace_back("reference", elapsed_ms(t0));

  t0 = Clock::now();
  auto f = stage2_forward(params_, config_.network, toggles, as_batch(padded), ref_skip,
                          static_cast<float>(options.omega1), static_cast<float>(options.omega2), *extractor_);
  out.timings_ms.emplace_back("network", elapsed_ms(t0));

  t0 = Clock::now();
  Image full = from_batch(f.image.value(), 0);
  out.image = crop(full, 0, 0, image_height(low_light), image_width(low_light));
  out.timings_ms.emplace_back("postprocess", elapsed_ms(t0));
  return out;
}

IndexGrid Enhancer::code_indices(const Image& low_light, bool use_shift) const {
  const int factor = config_.network.downsample_factor;
  check_enhanceable(low_light, factor, "image");
  const Image padded = pad_to_multiple(low_light, factor);
  auto enc = encode(params_, "encoder", config_.network, as_batch(padded));
  Var<float> see = enc.latent;
  if (config_.toggles.use_sem) {
    Var<float> f_se = ag::constant(extractor_->extract(as_batch(padded).value()));
    see = sem_forward(params_, "sem", config_.network, enc.latent, f_se).projected;
  }
  Var<float> table = effective_codebook(params_, use_shift);
  return index_grids(quantize(see.value(), table.value())).front();
}

IndexGrid stage1_code_indices(const Checkpoint& stage1, const Image& clean) {
  const auto& net = stage1.config.network;
  check_enhanceable(clean, net.downsample_factor, "image");
  const auto params = stage1.parameters();
  auto enc = encode(params, "encoder", net, as_batch(pad_to_multiple(clean, net.downsample_factor)));
  return index_grids(quantize(enc.latent.value(), params.get("codebook.codes").value())).front();
}

MetricReport evaluate_images(const std::vector<ImagePair>& pairs, const std::vector<Image>& outputs,
                             const std::string& label) {
  if (pairs.size() != outputs.size()) throw ContractViolation("evaluate_images: one output per pair required");
  MetricReport report;
  report.label = label;
  for (std::size_t i = 0; i < pairs.size(); ++i) report.images.push_back(measure(pairs[i].id, outputs[i], pairs[i].gt));
  report.finalize();
  return report;
}

MetricReport evaluate_pairs(const Enhancer& model, const std::vector<ImagePair>& pairs, const EnhanceOptions& options,
                            const std::string& label) {
  std::vector<Image> outputs;
  outputs.reserve(pairs.size());
  for (const auto& p : pairs) outputs.push_back(model.enhance(p.ll, options).image);
  return evaluate_images(pairs, outputs, label);
}

UsageReport usage_report(const Checkpoint& stage1, const Enhancer& model, const std::vector<ImagePair>& pairs,
                         const Enhancer* no_shift_model) {
  if (stage1.stage != 1) throw ConfigurationError("usage report needs a Stage I checkpoint");
  if (pairs.empty()) throw ConfigurationError("usage report needs at least one image pair");
  const auto n = static_cast<std::int64_t>(stage1.config.network.codebook_size);
  std::vector<IndexGrid> gt, without, with;
  const Enhancer& baseline = no_shift_model ? *no_shift_model : model;
  for (const auto& p : pairs) {
    gt.push_back(stage1_code_indices(stage1, p.gt));
    without.push_back(baseline.code_indices(p.ll, false));
    with.push_back(model.code_indices(p.ll, true));
  }
  return make_usage_report(usage_histogram(gt, n), usage_histogram(without, n), usage_histogram(with, n));
}

}  // namespace codeenhance
