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

#include <stdexcept>
#include <string>

namespace codeenhance {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape, size, divisibility).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable (non-finite values, out-of-range indices).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A statistic is undefined for the given data (e.g. correlation of a constant vector).
class DegenerateStatistics : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration (missing checkpoint, bad config key).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A serialized artifact failed validation. `field()` names the offending entry.
class IntegrityError : public Error {
 public:
  IntegrityError(std::string field, const std::string& what)
      : Error("integrity error in '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Paired dataset has files without a counterpart.
class PairingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace codeenhance
