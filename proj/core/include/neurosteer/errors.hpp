// Copyright 2026 The neurosteer Authors
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

namespace neurosteer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or signal shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable, malformed or inconsistent data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or parameters during training (CLI exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace neurosteer
