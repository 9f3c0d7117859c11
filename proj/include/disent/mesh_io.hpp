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

#include <filesystem>

#include "disent/mesh.hpp"

namespace disent {

/// Wavefront OBJ with v / vn / f records and 1-based indices. Coordinates are
/// written with round-trip precision.
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Reads v, vn and triangular f records ("i", "i/t", "i//n", "i/t/n").
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace disent
