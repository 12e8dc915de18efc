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

#include "codeenhance/metrics.hpp"

#include <cmath>
#include <limits>
#include <span>

#include <fmt/format.h>

#include "codeenhance/codebook.hpp"
#include "json.hpp"

namespace codeenhance {

using nlohmann::json;

namespace {

void require_same(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  }
  if (a.empty()) throw ContractViolation(std::string(what) + ": empty input");
}

// Separable 'valid' filtering of a [H, W] plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::int64_t t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * plane[static_cast<std::size_t>(y * w + x + t)];
      rows[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::int64_t t = 0; t < k; ++t) s += taps[static_cast<std::size_t>(t)] * rows[static_cast<std::size_t>((y + t) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  return out;
}

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

double parse_number(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw IntegrityError("metric", "unexpected metric string '" + s + "'");
  }
  return j.get<double>();
}

std::string fmt_metric(double v, int precision) {
  return std::isinf(v) ? std::string(v > 0 ? "inf" : "-inf") : fmt::format("{:.{}f}", v, precision);
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double mae(const Tensor<float>& a, const Tensor<float>& b) {
  require_same(a, b, "mae");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s / static_cast<double>(a.size());
}

Tensor<double> luma(const Image& im) {
  check_image(im, "luma");
  const std::int64_t h = image_height(im), w = image_width(im);
  Tensor<double> out(Shape{h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      out[static_cast<std::size_t>(y * w + x)] =
          0.299 * pixel(im, 0, y, x) + 0.587 * pixel(im, 1, y, x) + 0.114 * pixel(im, 2, y, x);
    }
  }
  return out;
}

std::vector<double> gaussian_taps(int window, double sigma) {
  if (window < 1 || !(sigma > 0)) throw ContractViolation("gaussian_taps: window >= 1 and sigma > 0 required");
  std::vector<double> taps(static_cast<std::size_t>(window));
  const double centre = (window - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < window; ++i) {
    const double d = i - centre;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
  require_same(a, b, "ssim");
  check_image(a, "ssim");
  const std::int64_t h = image_height(a), w = image_width(a);
  if (h < opt.window || w < opt.window) {
    throw ContractViolation(fmt::format("ssim: image {}x{} is smaller than the {}-pixel window", h, w, opt.window));
  }
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const auto luma_a = luma(a), luma_b = luma(b);
  const auto& x = luma_a.vec();
  const auto& y = luma_b.vec();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = filter_valid(x, h, w, taps), mu_y = filter_valid(y, h, w, taps);
  const auto e_xx = filter_valid(xx, h, w, taps), e_yy = filter_valid(yy, h, w, taps);
  const auto e_xy = filter_valid(xy, h, w, taps);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double vx = e_xx[i] - mx * mx, vy = e_yy[i] - my * my, cov = e_xy[i] - mx * my;
    total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mu_x.size());
}

ImageMetrics measure(const std::string& id, const Image& output, const Image& reference) {
  return ImageMetrics{id, psnr(output, reference), ssim(output, reference), mae(output, reference)};
}

UsageReport make_usage_report(std::vector<std::int64_t> gt_usage, std::vector<std::int64_t> no_shift_usage,
                              std::vector<std::int64_t> shift_usage) {
  if (gt_usage.size() != no_shift_usage.size() || gt_usage.size() != shift_usage.size()) {
    throw ContractViolation("usage histograms differ in length");
  }
  UsageReport r;
  r.alignment_no_shift = pearson_alignment(std::span<const std::int64_t>(no_shift_usage), std::span<const std::int64_t>(gt_usage));
  r.alignment_shift = pearson_alignment(std::span<const std::int64_t>(shift_usage), std::span<const std::int64_t>(gt_usage));
  auto top = [](const std::vector<std::int64_t>& h) {
    std::vector<std::pair<std::int32_t, std::int64_t>> out;
    for (auto code : top_k_codes(h, 10)) out.emplace_back(static_cast<std::int32_t>(code), h[static_cast<std::size_t>(code)]);
    return out;
  };
  r.top_gt = top(gt_usage);
  r.top_no_shift = top(no_shift_usage);
  r.top_shift = top(shift_usage);
  r.gt_usage = std::move(gt_usage);
  r.no_shift_usage = std::move(no_shift_usage);
  r.shift_usage = std::move(shift_usage);
  return r;
}

void MetricReport::add(ImageMetrics m) {
  images.push_back(std::move(m));
  finalize();
}

void MetricReport::finalize() {
  mean_psnr = mean_ssim = mean_mae = 0;
  if (images.empty()) return;
  for (const auto& m : images) {
    mean_psnr += m.psnr;
    mean_ssim += m.ssim;
    mean_mae += m.mae;
  }
  const auto n = static_cast<double>(images.size());
  mean_psnr /= n;
  mean_ssim /= n;
  mean_mae /= n;
}

std::string MetricReport::to_json() const {
  json j;
  j["label"] = label;
  j["images"] = json::array();
  for (const auto& m : images) {
    j["images"].push_back({{"id", m.id}, {"psnr", number_or_inf(m.psnr)}, {"ssim", m.ssim}, {"mae", m.mae}});
  }
  j["aggregate"] = {{"count", images.size()},
                    {"psnr", number_or_inf(mean_psnr)},
                    {"ssim", mean_ssim},
                    {"mae", mean_mae}};
  if (usage) {
    auto top = [](const auto& t) {
      json arr = json::array();
      for (const auto& [code, count] : t) arr.push_back({{"code", code}, {"count", count}});
      return arr;
    };
    j["usage"] = {{"gt", usage->gt_usage},
                  {"without_shift", usage->no_shift_usage},
                  {"with_shift", usage->shift_usage},
                  {"alignment_without_shift", usage->alignment_no_shift},
                  {"alignment_with_shift", usage->alignment_shift},
                  {"top10_gt", top(usage->top_gt)},
                  {"top10_without_shift", top(usage->top_no_shift)},
                  {"top10_with_shift", top(usage->top_shift)}};
  }
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricReport r;
  r.label = j.value("label", "");
  for (const auto& m : j.at("images")) {
    r.images.push_back(ImageMetrics{m.at("id").get<std::string>(), parse_number(m.at("psnr")),
                                    m.at("ssim").get<double>(), m.at("mae").get<double>()});
  }
  r.mean_psnr = parse_number(j.at("aggregate").at("psnr"));
  r.mean_ssim = j.at("aggregate").at("ssim").get<double>();
  r.mean_mae = j.at("aggregate").at("mae").get<double>();
  if (j.contains("usage")) {
    const auto& u = j.at("usage");
    r.usage = make_usage_report(u.at("gt").get<std::vector<std::int64_t>>(),
                                u.at("without_shift").get<std::vector<std::int64_t>>(),
                                u.at("with_shift").get<std::vector<std::int64_t>>());
  }
  return r;
}

std::string MetricReport::to_text() const {
  std::size_t id_width = 5;
  for (const auto& m : images) id_width = std::max(id_width, m.id.size());
  std::string out;
  if (!label.empty()) out += label + "\n";
  out += fmt::format("{:<{}}  {:>9}  {:>7}  {:>7}\n", "image", id_width, "psnr_db", "ssim", "mae");
  for (const auto& m : images) {
    out += fmt::format("{:<{}}  {:>9}  {:>7}  {:>7}\n", m.id, id_width, fmt_metric(m.psnr, 3), fmt_metric(m.ssim, 4),
                       fmt_metric(m.mae, 4));
  }
  out += fmt::format("{:<{}}  {:>9}  {:>7}  {:>7}\n", "mean", id_width, fmt_metric(mean_psnr, 3),
                     fmt_metric(mean_ssim, 4), fmt_metric(mean_mae, 4));
  if (usage) {
    out += fmt::format("code usage alignment with GT: without shift {:.4f}, with shift {:.4f}\n",
                       usage->alignment_no_shift, usage->alignment_shift);
    out += fmt::format("{:>4}  {:>14}  {:>14}  {:>14}\n", "rank", "gt", "without_shift", "with_shift");
    for (std::size_t i = 0; i < usage->top_gt.size(); ++i) {
      auto cell = [i](const auto& t) {
        return i < t.size() ? fmt::format("{}:{}", t[i].first, t[i].second) : std::string("-");
      };
      out += fmt::format("{:>4}  {:>14}  {:>14}  {:>14}\n", i + 1, cell(usage->top_gt), cell(usage->top_no_shift),
                         cell(usage->top_shift));
    }
  }
  return out;
}

}  // namespace codeenhance
