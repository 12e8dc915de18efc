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

// HTTP inference service.
//
//   GET  /health   {"status": "ready", "model_id": ...}
//   GET  /meta     config snapshot, omega ranges, downsample_factor, limits
//   POST /enhance  multipart/form-data or JSON with base64 PNG fields
//                  image, omega1, omega2, reference (optional)
//
// Validation failures return 400 with {"error", "field"}; images above the
// megapixel cap return 413; unexpected failures return 500 with an opaque id.

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codeenhance/inference.hpp"

namespace codeenhance {

inline constexpr double kOmegaMin = 0.0;
inline constexpr double kOmegaMax = 2.0;

std::string base64_encode(std::span<const unsigned char> bytes);
/// Accepts an optional "data:...;base64," prefix; throws InvalidInput on
/// malformed input.
std::vector<unsigned char> base64_decode(const std::string& text);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 8080;
  double max_megapixels = 4.0;
  /// Parallel request handlers; 0 selects the hardware concurrency.
  int workers = 0;
};

struct HttpResult {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class EnhanceService {
 public:
  EnhanceService(std::shared_ptr<const Enhancer> model, ServiceOptions options);
  ~EnhanceService();
  EnhanceService(const EnhanceService&) = delete;
  EnhanceService& operator=(const EnhanceService&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves until stop(); binds first if needed.
  void listen();
  /// bind() plus listen() on a background thread.
  int start();
  void stop();

  // Transport-independent handlers.
  HttpResult health() const;
  HttpResult meta() const;
  HttpResult enhance_json(const std::string& body) const;

  const Enhancer& model() const { return *model_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<const Enhancer> model_;
  ServiceOptions options_;
};

}  // namespace codeenhance
