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

#include "codeenhance/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <unistd.h>

#include "json.hpp"

namespace codeenhance {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

const TensorEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorEntry& Checkpoint::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw IntegrityError(name, "checkpoint has no tensor '" + name + "'");
}

ParameterStore<float> Checkpoint::parameters() const {
  ParameterStore<float> store;
  for (const auto& t : tensors) {
    if (!ParameterStore<float>::has_prefix(t.name, "optim.")) store.add(t.name, t.value, t.trainable);
  }
  return store;
}

Codebook<float> Checkpoint::codebook() const {
  const auto& codes = at("codebook.codes").value;
  const auto* shift = find("codebook.shift");
  return shift ? Codebook<float>(codes, shift->value, config.toggles.use_cs && stage == 2) : Codebook<float>(codes);
}

std::string Checkpoint::model_id() const {
  return fmt::format("ce-s{}-{:016x}", stage, parameters().checksum());
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["format_version"] = ckpt.format_version;
  header["stage"] = ckpt.stage;
  header["iteration"] = ckpt.iteration;
  header["config"] = json::parse(ckpt.config.to_json());
  header["state"] = json::parse(ckpt.state_json);
  header["tensors"] = json::array();
  std::vector<unsigned char> payload;
  for (const auto& t : ckpt.tensors) {
    if (static_cast<std::int64_t>(t.value.size()) != shape_numel(t.value.shape())) {
      throw ContractViolation("checkpoint tensor '" + t.name + "' has inconsistent storage");
    }
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", payload.size()}, {"trainable", t.trainable}});
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.value.data());
    payload.insert(payload.end(), bytes, bytes + t.value.size() * sizeof(float));
  }
  header["payload_bytes"] = payload.size();
  header["payload_checksum"] = fmt::format("{:016x}", fnv1a(payload));
  const std::string text = header.dump();

  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 8);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

namespace {

template <typename V>
V field(const json& j, const std::string& key) {
  if (!j.contains(key)) throw IntegrityError(key, "checkpoint header is missing '" + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    throw IntegrityError(key, "checkpoint header field '" + key + "' has the wrong type");
  }
}

void check_codebook_dims(const Checkpoint& ckpt) {
  const auto& net = ckpt.config.network;
  const Shape expected{net.codebook_size, net.latent_channels};
  for (const char* name : {"codebook.codes", "codebook.shift"}) {
    const auto* t = ckpt.find(name);
    if (t == nullptr) throw IntegrityError(name, std::string("checkpoint has no tensor '") + name + "'");
    if (t->value.shape() != expected) {
      throw IntegrityError(name, fmt::format("'{}' has shape [{}], config expects [{}]", name,
                                             shape_str(t->value.shape()), shape_str(expected)));
    }
  }
}

}  // namespace

Checkpoint parse_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw IntegrityError("magic", "not a checkpoint file (bad magic)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + static_cast<std::size_t>(i)]) << (8 * i);
  if (len > bytes.size() - 16) throw IntegrityError("header_length", "header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw IntegrityError("header", std::string("header is not valid JSON: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.format_version = field<int>(header, "format_version");
  if (ckpt.format_version != kCheckpointFormatVersion) {
    throw IntegrityError("format_version", fmt::format("unsupported checkpoint format version {} (expected {})",
                                                       ckpt.format_version, kCheckpointFormatVersion));
  }
  ckpt.stage = field<int>(header, "stage");
  if (ckpt.stage != 1 && ckpt.stage != 2) throw IntegrityError("stage", "stage must be 1 or 2");
  ckpt.iteration = field<std::int64_t>(header, "iteration");
  if (!header.contains("config") || !header["config"].is_object()) {
    throw IntegrityError("config", "checkpoint header is missing the config snapshot");
  }
  ckpt.config = RunConfig::from_json(header["config"].dump());
  if (!header.contains("state") || !header["state"].is_object()) {
    throw IntegrityError("state", "checkpoint header is missing the trainer state");
  }
  ckpt.state_json = header["state"].dump();

  const auto payload = bytes.subspan(16 + len);
  const auto payload_bytes = field<std::uint64_t>(header, "payload_bytes");
  if (payload_bytes != payload.size()) {
    throw IntegrityError("payload_bytes", fmt::format("payload has {} bytes, header declares {}", payload.size(),
                                                      payload_bytes));
  }
  if (field<std::string>(header, "payload_checksum") != fmt::format("{:016x}", fnv1a(payload))) {
    throw IntegrityError("payload_checksum", "payload checksum mismatch");
  }
  if (!header.contains("tensors") || !header["tensors"].is_array()) {
    throw IntegrityError("tensors", "checkpoint header has no tensor manifest");
  }
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < header["tensors"].size(); ++i) {
    const auto& e = header["tensors"][i];
    const std::string where = fmt::format("tensors[{}]", i);
    TensorEntry t;
    try {
      t.name = e.at("name").get<std::string>();
      t.trainable = e.at("trainable").get<bool>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      for (auto d : shape) {
        if (d < 0) throw IntegrityError(where + ".shape", "negative dimension");
      }
      if (offset != expected_offset) throw IntegrityError(where + ".offset", "tensor offset out of manifest order");
      const auto n = static_cast<std::uint64_t>(shape_numel(shape));
      if (offset + n * sizeof(float) > payload.size()) {
        throw IntegrityError(where + ".shape", "tensor '" + t.name + "' extends past the payload");
      }
      std::vector<float> data(n);
      std::memcpy(data.data(), payload.data() + offset, n * sizeof(float));
      t.value = Tensor<float>(shape, std::move(data));
      expected_offset = offset + n * sizeof(float);
    } catch (const json::exception&) {
      throw IntegrityError(where, "malformed tensor manifest entry");
    }
    if (ckpt.find(t.name)) throw IntegrityError(where + ".name", "duplicate tensor '" + t.name + "'");
    ckpt.tensors.push_back(std::move(t));
  }
  if (expected_offset != payload.size()) throw IntegrityError("payload_bytes", "payload has trailing bytes");
  check_codebook_dims(ckpt);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + fmt::format(".tmp{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void check_compatible(const Checkpoint& ckpt, const NetworkConfig& net) {
  const auto& have = ckpt.config.network;
  auto same = [](const char* name, auto a, auto b) {
    if (a != b) {
      throw IntegrityError(std::string("network.") + name,
                           fmt::format("checkpoint network.{} is {}, expected {}", name, a, b));
    }
  };
  same("latent_channels", have.latent_channels, net.latent_channels);
  same("codebook_size", have.codebook_size, net.codebook_size);
  same("base_channels", have.base_channels, net.base_channels);
  same("downsample_factor", have.downsample_factor, net.downsample_factor);
  same("semantic_channels", have.semantic_channels, net.semantic_channels);
  same("attention_channels", have.attention_channels, net.attention_channels);
  same("mlp_hidden", have.mlp_hidden, net.mlp_hidden);
  same("tft_kernel", have.tft_kernel, net.tft_kernel);
}

}  // namespace codeenhance
