// Copyright 2026 The ffattn Authors
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

#ifndef FFATTN_ERRORS_H_
#define FFATTN_ERRORS_H_

#include <stdexcept>
#include <string>

namespace ffattn {

// Shapes of the operands do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller violated an operation precondition (non-scalar loss, non-positive
// kernel features, fully masked row, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An object was used in a state that no longer permits the call, e.g. a
// second backward pass over an already consumed graph.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration value. The message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or out-of-range input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ffattn

#endif  // FFATTN_ERRORS_H_
