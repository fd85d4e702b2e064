// Copyright 2026 The DVPT Toolkit Authors
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

namespace dvpt {

// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (non-scalar loss, double prompt
// injection, label out of range, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A forward op produced NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unknown key. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint tensors do not match the model (name or shape). Exit code 3.
class ArchitectureMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic, truncated file or CRC failure. Exit code 4.
class CorruptFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dvpt
