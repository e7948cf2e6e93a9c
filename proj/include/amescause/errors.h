/*
 * Copyright 2026 The amescause Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef AMESCAUSE_ERRORS_H_
#define AMESCAUSE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace amescause {

// Base class of every error raised by the library. Precondition violations on
// plain arguments (bad ratios, empty vectors) use std::invalid_argument
// instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data problems: missing files, schema mismatch, bad rows, constant
// targets.
class DataError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed, or a prerequisite artifact is missing or stale.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace amescause

#endif  // AMESCAUSE_ERRORS_H_
