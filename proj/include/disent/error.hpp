// Copyright 2026 The disent3d Authors
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

namespace disent {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kStructuralIntegrity = 2,
  kEmptySurface = 3,
  kShape = 4,
  kConfiguration = 5,
  kDivergence = 6,
  kIo = 7,
  kInternal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Mesh is not a closed, consistently wound 2-manifold.
struct StructuralError : Error {
  explicit StructuralError(const std::string& w)
      : Error(ErrorCode::kStructuralIntegrity, w) {}
};

/// A scalar field has no crossing of the requested iso level.
struct EmptySurfaceError : Error {
  EmptySurfaceError(const std::string& w, double field_min, double field_max)
      : Error(ErrorCode::kEmptySurface, w), min(field_min), max(field_max) {}
  double min;
  double max;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCode::kShape, w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w)
      : Error(ErrorCode::kConfiguration, w) {}
};

/// Non-finite value during training or loss evaluation.
struct DivergenceError : Error {
  DivergenceError(const std::string& w, long long step_index,
                  std::string component_name)
      : Error(ErrorCode::kDivergence, w),
        step(step_index),
        component(std::move(component_name)) {}
  long long step;
  std::string component;
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::kIo, w) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w)
      : Error(ErrorCode::kInvalidArgument, w) {}
};

}  // namespace disent
