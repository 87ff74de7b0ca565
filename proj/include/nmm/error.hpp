// Copyright 2026 The NMM Authors.
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

namespace nmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to a numeric kernel (non-positive gamma argument, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: bad ids, mismatched sizes, parse failures.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An enumeration would exceed its configured budget; callers should fall
/// back to the variational path.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A value or gradient became NaN or infinite where a finite one is needed.
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

}  // namespace nmm
