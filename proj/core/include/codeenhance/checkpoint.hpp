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

// Single-file checkpoint container.
//
// Layout:
//   8 bytes   magic "CENHCKPT"
//   8 bytes   header length L, little-endian uint64
//   L bytes   JSON header: format_version, stage, iteration, config, state,
//             tensors [{name, shape, offset, trainable}], payload_bytes,
//             payload_checksum (FNV-1a 64, hex)
//   payload   little-endian float32 tensors in manifest order

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "codeenhance/codebook.hpp"
#include "codeenhance/config.hpp"
#include "codeenhance/parameters.hpp"

namespace codeenhance {

inline constexpr char kCheckpointMagic[8] = {'C', 'E', 'N', 'H', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointFormatVersion = 1;

struct TensorEntry {
  std::string name;
  Tensor<float> value;
  bool trainable = false;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  int stage = 1;
  std::int64_t iteration = 0;
  RunConfig config;
  /// Opaque trainer state (RNG, optimizer step counts) as a JSON object.
  std::string state_json = "{}";
  std::vector<TensorEntry> tensors;

  const TensorEntry* find(const std::string& name) const;
  const TensorEntry& at(const std::string& name) const;
  /// Model parameters, i.e. every entry outside the "optim." namespace.
  ParameterStore<float> parameters() const;
  Codebook<float> codebook() const;
  /// Hex digest of the model parameters.
  std::string model_id() const;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const unsigned char> bytes);

/// Writes to a temporary sibling then renames it over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError when unreadable and IntegrityError naming the first invalid
/// field otherwise.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws IntegrityError when the checkpoint's architecture differs from `net`.
void check_compatible(const Checkpoint& ckpt, const NetworkConfig& net);

std::uint64_t fnv1a(std::span<const unsigned char> bytes);

}  // namespace codeenhance
