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

#include "codeenhance/service.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "json.hpp"

namespace codeenhance {

using nlohmann::json;

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::string s = text;
  if (s.rfind("data:", 0) == 0) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw InvalidInput("malformed data URL");
    s = s.substr(comma + 1);
  }
  std::erase_if(s, [](unsigned char c) { return std::isspace(c); });
  if (s.empty() || s.size() % 4 != 0) throw InvalidInput("base64 length must be a positive multiple of 4");
  std::vector<unsigned char> out(s.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
  if (n < 0) throw InvalidInput("invalid base64 data");
  std::size_t padding = 0;
  if (s.back() == '=') ++padding;
  if (s.size() >= 2 && s[s.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

namespace {

struct RequestError {
  int status;
  std::string field;
  std::string message;
};

struct EnhanceRequest {
  std::vector<unsigned char> image;
  std::vector<unsigned char> reference;
  double omega1 = 1.0;
  double omega2 = 1.0;
};

HttpResult json_result(int status, const json& body) { return HttpResult{status, "application/json", body.dump()}; }

double parse_omega(const std::string& field, const std::string& raw) {
  double v = 0;
  const char* first = raw.data();
  const char* last = raw.data() + raw.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (raw.empty() || ec != std::errc() || ptr != last) {
    throw RequestError{400, field, "'" + field + "' must be a number"};
  }
  return v;
}

double omega_from_json(const json& body, const std::string& field) {
  if (!body.contains(field) || body[field].is_null()) return 1.0;
  const auto& v = body[field];
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_omega(field, v.get<std::string>());
  throw RequestError{400, field, "'" + field + "' must be a number"};
}

std::vector<unsigned char> bytes_from_json(const json& body, const std::string& field, bool required) {
  if (!body.contains(field) || body[field].is_null()) {
    if (required) throw RequestError{400, field, "'" + field + "' is required"};
    return {};
  }
  if (!body[field].is_string()) throw RequestError{400, field, "'" + field + "' must be a base64 string"};
  try {
    return base64_decode(body[field].get<std::string>());
  } catch (const InvalidInput& e) {
    throw RequestError{400, field, "'" + field + "': " + e.what()};
  }
}

EnhanceRequest parse_json_request(const std::string& text) {
  json body;
  try {
    body = json::parse(text);
  } catch (const json::exception&) {
    throw RequestError{400, "body", "request body must be JSON or multipart/form-data"};
  }
  if (!body.is_object()) throw RequestError{400, "body", "request body must be a JSON object"};
  EnhanceRequest req;
  req.image = bytes_from_json(body, "image", true);
  req.reference = bytes_from_json(body, "reference", false);
  req.omega1 = omega_from_json(body, "omega1");
  req.omega2 = omega_from_json(body, "omega2");
  return req;
}

EnhanceRequest parse_multipart_request(const httplib::Request& r) {
  EnhanceRequest req;
  if (!r.has_file("image")) throw RequestError{400, "image", "'image' is required"};
  const auto& image = r.get_file_value("image").content;
  req.image.assign(image.begin(), image.end());
  if (r.has_file("reference")) {
    const auto& ref = r.get_file_value("reference").content;
    req.reference.assign(ref.begin(), ref.end());
  }
  if (r.has_file("omega1")) req.omega1 = parse_omega("omega1", r.get_file_value("omega1").content);
  if (r.has_file("omega2")) req.omega2 = parse_omega("omega2", r.get_file_value("omega2").content);
  return req;
}

std::string new_error_id() {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t salt = std::random_device{}();
  return fmt::format("err-{:08x}-{:04x}", static_cast<std::uint32_t>(salt), counter.fetch_add(1) & 0xffff);
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

void log_line(const std::string& line) {
  std::lock_guard lock(log_mutex());
  std::cerr << line << std::endl;
}

}  // namespace

struct EnhanceService::Impl {
  httplib::Server server;
  std::thread thread;
  int port = -1;

  HttpResult run_enhance(const EnhanceService& svc, const EnhanceRequest& req) const;
};

HttpResult EnhanceService::Impl::run_enhance(const EnhanceService& svc, const EnhanceRequest& req) const {
  for (auto [field, value] : {std::pair{"omega1", req.omega1}, std::pair{"omega2", req.omega2}}) {
    if (!std::isfinite(value) || value < kOmegaMin || value > kOmegaMax) {
      throw RequestError{400, field,
                         fmt::format("'{}' must be within [{}, {}], got {}", field, kOmegaMin, kOmegaMax, value)};
    }
  }
  auto decode = [&svc](const std::vector<unsigned char>& bytes, const std::string& field) {
    std::pair<std::int64_t, std::int64_t> dims;
    try {
      dims = png_dimensions(bytes);
    } catch (const IoError&) {
      throw RequestError{400, field, "'" + field + "' is not a valid PNG image"};
    }
    const double megapixels = static_cast<double>(dims.first) * static_cast<double>(dims.second) / 1e6;
    if (megapixels > svc.options_.max_megapixels) {
      throw RequestError{413, field, fmt::format("'{}' has {:.2f} megapixels, limit is {:.2f}", field, megapixels,
                                                 svc.options_.max_megapixels)};
    }
    try {
      return decode_png(bytes);
    } catch (const IoError&) {
      throw RequestError{400, field, "'" + field + "' is not a valid PNG image"};
    }
  };
  EnhanceOptions opts;
  opts.omega1 = req.omega1;
  opts.omega2 = req.omega2;
  const Image image = decode(req.image, "image");
  if (!req.reference.empty()) opts.reference = decode(req.reference, "reference");
  EnhanceOutput out;
  try {
    out = svc.model_->enhance(image, opts);
  } catch (const InvalidInput& e) {
    throw RequestError{400, "image", e.what()};
  }
  const auto png = encode_png(out.image);
  json timings = json::object();
  for (const auto& [phase, ms] : out.timings_ms) timings[phase] = ms;
  return json_result(200, {{"image", base64_encode(png)},
                           {"width", image_width(out.image)},
                           {"height", image_height(out.image)},
                           {"omega1", out.omega1},
                           {"omega2", out.omega2},
                           {"model_id", svc.model_->model_id()},
                           {"timings_ms", timings}});
}

namespace {

template <typename Fn>
HttpResult guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const RequestError& e) {
    return json_result(e.status, {{"error", e.message}, {"field", e.field}});
  } catch (const std::exception& e) {
    const std::string id = new_error_id();
    log_line(fmt::format("[{}] internal error: {}", id, e.what()));
    return json_result(500, {{"error", "internal error"}, {"id", id}});
  }
}

}  // namespace

EnhanceService::EnhanceService(std::shared_ptr<const Enhancer> model, ServiceOptions options)
    : impl_(std::make_unique<Impl>()), model_(std::move(model)), options_(std::move(options)) {
  if (!model_) throw ConfigurationError("service needs a model");
  if (!(options_.max_megapixels > 0)) throw ConfigurationError("max_megapixels must be > 0");
  const int workers = options_.workers > 0 ? options_.workers
                                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto& srv = impl_->server;
  srv.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  // Base64 inflates by 4/3; leave headroom for the reference image.
  srv.set_payload_max_length(static_cast<std::size_t>(options_.max_megapixels * 1e6 * 3 * 4 * 2) + (1 << 20));
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  srv.Get("/meta", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, meta()); });
  srv.Post("/enhance", [this, reply](const httplib::Request& req, httplib::Response& res) {
    if (req.is_multipart_form_data()) {
      reply(res, guarded([&] { return impl_->run_enhance(*this, parse_multipart_request(req)); }));
    } else {
      reply(res, enhance_json(req.body));
    }
  });
}

EnhanceService::~EnhanceService() { stop(); }

HttpResult EnhanceService::health() const {
  return json_result(200, {{"status", "ready"}, {"model_id", model_->model_id()}});
}

HttpResult EnhanceService::meta() const {
  const auto& cfg = model_->config();
  return json_result(200, {{"model_id", model_->model_id()},
                           {"config", json::parse(cfg.to_json())},
                           {"omega_range", {{"omega1", {kOmegaMin, kOmegaMax}}, {"omega2", {kOmegaMin, kOmegaMax}}}},
                           {"omega_defaults", {{"omega1", 1.0}, {"omega2", 1.0}}},
                           {"downsample_factor", cfg.network.downsample_factor},
                           {"max_megapixels", options_.max_megapixels}});
}

HttpResult EnhanceService::enhance_json(const std::string& body) const {
  return guarded([&] { return impl_->run_enhance(*this, parse_json_request(body)); });
}

int EnhanceService::bind() {
  if (impl_->port >= 0) return impl_->port;
  if (options_.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(options_.host);
  } else if (impl_->server.bind_to_port(options_.host, options_.port)) {
    impl_->port = options_.port;
  }
  if (impl_->port <= 0) {
    impl_->port = -1;
    throw IoError(fmt::format("cannot bind {}:{}", options_.host, options_.port));
  }
  return impl_->port;
}

void EnhanceService::listen() {
  bind();
  impl_->server.listen_after_bind();
}

int EnhanceService::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void EnhanceService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace codeenhance
