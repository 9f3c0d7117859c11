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

#include <array>
#include <string>
#include <vector>

#include "disent/mesh.hpp"

namespace disent {

/// Joint angles in radians, each in [-pi/3, pi/3].
struct Pose {
  double left_arm = 0.0;   ///< abduction
  double right_arm = 0.0;
  double left_leg = 0.0;   ///< spread
  double right_leg = 0.0;

  std::array<double, 4> as_array() const { return {left_arm, right_arm, left_leg, right_leg}; }
  bool operator==(const Pose&) const = default;
};

/// Scale factors, each in [0.8, 1.2].
struct BodyShape {
  double height = 1.0;
  double torso = 1.0;  ///< torso radius scale
  double limb = 1.0;   ///< limb radius scale

  bool operator==(const BodyShape&) const = default;
};

struct Garment {
  double length = 0.5;      ///< fraction of shoulder-to-foot covered, [0.3, 0.7]
  double looseness = 0.05;  ///< shell offset from the torso, [0.02, 0.10]
  bool sleeves = false;

  bool operator==(const Garment&) const = default;
};

struct FigureParams {
  Pose pose;
  BodyShape shape;
  Garment garment;

  /// Throws InvalidArgument naming the first component out of range.
  void validate() const;
  bool operator==(const FigureParams&) const = default;
};

/// The three attribute blocks of a figure.
enum class Attribute { kPose = 0, kShape = 1, kGarment = 2 };

const char* attribute_name(Attribute a);
Attribute parse_attribute(const std::string& name);  // "pose" | "shape" | "garment"

struct SdfSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();  ///< gradient of the closest primitive (unit norm)
};

/// Dressed articulated figure as a union of spheres and capsules. The
/// field is the pointwise minimum of exact primitive SDFs: exact outside,
/// a lower bound in magnitude inside, and exact in sign everywhere.
class Figure {
 public:
  explicit Figure(const FigureParams& params);

  double sdf(const Vec3& p) const;
  SdfSample eval(const Vec3& p) const;
  const FigureParams& params() const { return params_; }

 private:
  struct Capsule {
    Vec3 a;
    Vec3 b;
    double radius;
  };
  FigureParams params_;
  std::vector<Capsule> parts_;  // spheres are capsules with a == b
};

double figure_sdf(const FigureParams& params, const Vec3& p);

}  // namespace disent
