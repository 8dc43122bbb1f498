// Copyright 2026 The Authors.
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

namespace kgc {

/// Base of every error thrown by the library. Runtime failures (I/O,
/// numerical divergence, network) use it directly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is invalid: malformed records, unknown codes, duplicate ids.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A malformed line in a line-delimited input file.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : ValidationError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration: unknown keys, inconsistent sizes, bad templates.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Remote fetch failed after exhausting retries, or provider returned an error.
class FetchError : public Error {
 public:
  FetchError(std::string code, const std::string& what)
      : Error("code " + code + ": " + what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace kgc
