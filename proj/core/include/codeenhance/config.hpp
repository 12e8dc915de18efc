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

// Run configuration. Files use TOML-style sections whose keys mirror the
// field names below:
//
//   [network]  NetworkConfig     [train]  TrainConfig
//   [loss]     LossWeights       [model]  ModelToggles
//   [data]     DataConfig        [service] ServiceConfig
//   [output]   dir

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "codeenhance/data.hpp"
#include "codeenhance/losses.hpp"
#include "codeenhance/networks.hpp"

namespace codeenhance {

struct TrainConfig {
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop = 64;
  int batch = 4;
  int stage1_iters = 2000;
  int stage2_iters = 500;
  std::uint64_t seed = 0;
  double omega1 = 1.0;
  double omega2 = 1.0;
  int log_every = 50;
  /// 0 writes a checkpoint only at the end of the run.
  int checkpoint_every = 0;

  int iters(int stage) const { return stage == 1 ? stage1_iters : stage2_iters; }
  void validate(const NetworkConfig& net) const;
};

struct DataConfig {
  /// Paired dataset root (low/ + high/); empty selects the synthetic set.
  std::string root;
  std::string manifest;
  int synthetic_count = 8;
  int synthetic_size = 64;
  std::uint64_t synthetic_seed = 2024;
  DegradeRanges degrade;

  bool synthetic() const { return root.empty() && manifest.empty(); }
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  double max_megapixels = 4.0;
  /// 0 selects the hardware concurrency.
  int workers = 0;
};

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  LossWeights loss;
  ModelToggles toggles;
  DataConfig data;
  ServiceConfig service;
  std::string output_dir = "runs/desk";

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

/// Parses a config file over the defaults. Unknown sections or keys and
/// malformed values raise ConfigurationError naming the key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::string& source = "<string>");

}  // namespace codeenhance
