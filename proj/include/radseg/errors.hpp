/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace radseg {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, config = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

/// Tensor or image extents do not line up.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape error: " + what) {}
};

/// Input values outside the operation's domain (non-binary masks, t2 <= 0, ...).
class ValidationError : public DataError {
 public:
  explicit ValidationError(const std::string& what) : DataError("validation error: " + what) {}
};

/// Operation invoked in the wrong order (backward before forward, eval before stats).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error("state error: " + what, ExitCode::data) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error("numerical failure: " + what, ExitCode::numerical) {}
};

}  // namespace radseg
