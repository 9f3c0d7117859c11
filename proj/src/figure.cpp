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

#include "disent/figure.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "disent/error.hpp"

namespace disent {

namespace {

// Figure layout at unit height scale; y is up, the figure faces +z.
constexpr double kHipY = -0.05;
constexpr double kTorsoTopY = 0.30;
constexpr double kShoulderY = 0.27;
constexpr double kHeadY = 0.52;
constexpr double kHeadRadius = 0.11;
constexpr double kNeckRadius = 0.05;
constexpr double kTorsoRadius = 0.14;
constexpr double kArmLength = 0.50;
constexpr double kArmRadius = 0.045;
constexpr double kLegLength = 0.62;
constexpr double kLegRadius = 0.06;
constexpr double kHipHalfWidth = 0.07;
constexpr double kSleeveFraction = 0.45;

// Joint angle theta in [-pi/3, pi/3] to an angle from straight down.
double arm_angle(double theta) { return std::numbers::pi / 3.0 + theta; }
double leg_angle(double theta) { return 0.12 + 0.35 * theta; }

void check_range(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    throw InvalidArgument(fmt::format("{} = {} outside [{}, {}]", name, v, lo, hi));
  }
}

}  // namespace

const char* attribute_name(Attribute a) {
  switch (a) {
    case Attribute::kPose:
      return "pose";
    case Attribute::kShape:
      return "shape";
    case Attribute::kGarment:
      return "garment";
  }
  return "?";
}

Attribute parse_attribute(const std::string& name) {
  if (name == "pose") return Attribute::kPose;
  if (name == "shape") return Attribute::kShape;
  if (name == "garment") return Attribute::kGarment;
  throw InvalidArgument("unknown attribute '" + name + "' (pose|shape|garment)");
}

void FigureParams::validate() const {
  const double lim = std::numbers::pi / 3.0;
  check_range("pose.left_arm", pose.left_arm, -lim, lim);
  check_range("pose.right_arm", pose.right_arm, -lim, lim);
  check_range("pose.left_leg", pose.left_leg, -lim, lim);
  check_range("pose.right_leg", pose.right_leg, -lim, lim);
  check_range("shape.height", shape.height, 0.8, 1.2);
  check_range("shape.torso", shape.torso, 0.8, 1.2);
  check_range("shape.limb", shape.limb, 0.8, 1.2);
  check_range("garment.length", garment.length, 0.3, 0.7);
  check_range("garment.looseness", garment.looseness, 0.02, 0.10);
}

Figure::Figure(const FigureParams& params) : params_(params) {
  params.validate();
  const double s = params.shape.height;
  const double rt = kTorsoRadius * params.shape.torso;
  const double ra = kArmRadius * params.shape.limb;
  const double rl = kLegRadius * params.shape.limb;
  const double loose = params.garment.looseness;

  const Vec3 head(0.0, kHeadY * s, 0.0);
  const Vec3 torso_top(0.0, kTorsoTopY * s, 0.0);
  const Vec3 hip(0.0, kHipY * s, 0.0);
  parts_.push_back({head, head, kHeadRadius * s});
  parts_.push_back({torso_top, head, kNeckRadius});
  parts_.push_back({hip, torso_top, rt});

  const double shoulder_x = 0.75 * rt + 0.03;
  const std::array<double, 2> arms = {params.pose.left_arm, params.pose.right_arm};
  const std::array<double, 2> legs = {params.pose.left_leg, params.pose.right_leg};
  std::array<Vec3, 2> shoulder{}, arm_dir{};
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    const double phi = arm_angle(arms[side]);
    shoulder[side] = Vec3(sign * shoulder_x, kShoulderY * s, 0.0);
    arm_dir[side] = Vec3(sign * std::sin(phi), -std::cos(phi), 0.0);
    parts_.push_back({shoulder[side], shoulder[side] + kArmLength * s * arm_dir[side], ra});

    const double psi = leg_angle(legs[side]);
    const Vec3 hip_joint(sign * kHipHalfWidth * params.shape.torso, kHipY * s, 0.0);
    const Vec3 leg_dir(sign * std::sin(psi), -std::cos(psi), 0.0);
    parts_.push_back({hip_joint, hip_joint + kLegLength * s * leg_dir, rl});
  }

  // Garment shell: the torso dilated by the looseness offset, running from the
  // torso top down to the requested fraction of the shoulder-to-foot span.
  const double top = kTorsoTopY * s;
  const double foot = (kHipY - kLegLength) * s;
  const double bottom = top - params.garment.length * (top - foot);
  parts_.push_back({Vec3(0.0, bottom, 0.0), Vec3(0.0, top, 0.0), rt + loose});
  if (params.garment.sleeves) {
    for (int side = 0; side < 2; ++side) {
      parts_.push_back({shoulder[side],
                        shoulder[side] + kSleeveFraction * kArmLength * s * arm_dir[side],
                        ra + loose});
    }
  }
}

SdfSample Figure::eval(const Vec3& p) const {
  SdfSample best;
  best.value = std::numeric_limits<double>::infinity();
  for (const Capsule& c : parts_) {
    const Vec3 ab = c.b - c.a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 d = p - (c.a + t * ab);
    const double dist = d.norm();
    const double value = dist - c.radius;
    if (value < best.value) {
      best.value = value;
      best.gradient = dist > 0.0 ? Vec3(d / dist) : Vec3::UnitZ();
    }
  }
  return best;
}

double Figure::sdf(const Vec3& p) const { return eval(p).value; }

double figure_sdf(const FigureParams& params, const Vec3& p) {
  return Figure(params).sdf(p);
}

}  // namespace disent
