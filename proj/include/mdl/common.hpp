// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mdl {

// Base error for everything raised by the library. Subclasses map onto the
// CLI exit codes: SpecError/ConfigError -> 1, anything else -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid architecture, plan, or head description.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration (files, flags, overrides).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor/parameter shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// File-level problems: missing, truncated, bad magic.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training failures (divergence guard, bad labels).
class TrainError : public Error {
 public:
  using Error::Error;
};

// FNV-1a, used for config/plan digests and seed stream derivation.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

// Shortest decimal representation that round-trips through a double.
std::string format_double(double value);

}  // namespace mdl
