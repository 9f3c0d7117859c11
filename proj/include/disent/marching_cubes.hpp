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

#include "disent/mesh.hpp"
#include "disent/scalar_grid.hpp"

namespace disent {

/// Extracts the iso surface of `grid` as a closed, outward-oriented mesh.
///
/// Each cube cell is split into the six tetrahedra of its Kuhn triangulation
/// (all sharing the main diagonal), which is translation invariant, so shared
/// cell faces are cut identically from both sides and the output has no cracks.
/// Vertices are deduplicated per grid edge. Samples outside the grid are
/// treated as "outside", so surfaces touching the bounds are capped there.
///
/// Normals point toward increasing SDF (decreasing occupancy).
/// Throws EmptySurfaceError if no cell crosses `iso`.
TriangleMesh marching_cubes(const ScalarFieldGrid& grid, double iso);

}  // namespace disent
