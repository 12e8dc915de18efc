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

#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "codeenhance/autograd.hpp"

namespace codeenhance {

/// Named, ordered collection of parameter leaves. Names are dotted paths
/// ("encoder.conv_in.weight"); iteration order is lexicographic.
template <typename T>
class ParameterStore {
 public:
  ag::Var<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    auto [it, inserted] = params_.emplace(name, ag::Var<T>::leaf(std::move(value), trainable));
    if (!inserted) throw ContractViolation("duplicate parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const ag::Var<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigurationError("missing parameter '" + name + "'");
    return it->second;
  }
  ag::Var<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigurationError("missing parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names(std::string_view prefix = {}) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : params_) {
      if (has_prefix(name, prefix)) out.push_back(name);
    }
    return out;
  }

  void set_trainable(std::string_view prefix, bool trainable) {
    for (auto& [name, var] : params_) {
      if (has_prefix(name, prefix)) var.set_requires_grad(trainable);
    }
  }

  void zero_grad() {
    for (auto& [_, var] : params_) var.zero_grad();
  }

  std::int64_t numel(std::string_view prefix = {}) const {
    std::int64_t n = 0;
    for (const auto& [name, var] : params_) {
      if (has_prefix(name, prefix)) n += static_cast<std::int64_t>(var.value().size());
    }
    return n;
  }

  /// FNV-1a over names, shapes and raw value bytes of the matching parameters.
  std::uint64_t checksum(std::string_view prefix = {}) const {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* bytes = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [name, var] : params_) {
      if (!has_prefix(name, prefix)) continue;
      mix(name.data(), name.size());
      for (auto d : var.shape()) mix(&d, sizeof(d));
      mix(var.value().data(), var.value().size() * sizeof(T));
    }
    return h;
  }

  /// Registers copies of every `from.*` parameter under `to.*`.
  void copy_prefix(const std::string& from, const std::string& to, bool trainable) {
    for (const auto& name : names(from + ".")) {
      const std::string target = to + name.substr(from.size());
      if (contains(target)) {
        get(target).mutable_value() = get(name).value();
      } else {
        add(target, get(name).value(), trainable);
      }
    }
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, var] : params_) out.add(name, var.value().template cast<U>(), var.requires_grad());
    return out;
  }

  const std::map<std::string, ag::Var<T>>& entries() const { return params_; }
  std::size_t size() const { return params_.size(); }

  static bool has_prefix(std::string_view name, std::string_view prefix) {
    return name.substr(0, prefix.size()) == prefix;
  }

 private:
  std::map<std::string, ag::Var<T>> params_;
};

}  // namespace codeenhance
