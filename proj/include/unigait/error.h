// Copyright 2026 The unigait Authors
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

#ifndef UNIGAIT_ERROR_H_
#define UNIGAIT_ERROR_H_

#include <stdexcept>
#include <string>

namespace unigait {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a precondition (shape, range,
// missing file). The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a computation that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A persisted file is malformed, truncated or fails its hash check.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace unigait

#endif  // UNIGAIT_ERROR_H_
