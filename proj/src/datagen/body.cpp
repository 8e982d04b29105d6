#include "agvp/datagen.hpp"

#include <cmath>
#include <numbers>

namespace agvp::datagen {

namespace {

constexpr double kPi = std::numbers::pi;

// UV row bands as fractions of the grid height.
constexpr double kHeadEnd = 10.0 / 64.0;
constexpr double kTorsoEnd = 34.0 / 64.0;
constexpr double kArmEnd = 46.0 / 64.0;

constexpr double kHeadRadius = 0.075;
constexpr double kHeadCenterZ = 0.92;
constexpr double kTorsoTop = 0.83;
constexpr double kTorsoBottom = 0.50;
constexpr double kTorsoRx = 0.13;
constexpr double kTorsoRy = 0.08;
constexpr double kCapHeight = 0.03;
constexpr double kArmRadius = 0.035;
constexpr double kArmLength = 0.32;
constexpr double kLegRadius = 0.055;
constexpr double kLegLength = 0.50;

na::Vec3 rotate_x(const na::Vec3& v, double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {v.x(), v.y() * c - v.z() * s, v.y() * s + v.z() * c};
}

}  // namespace

BodyModel::BodyModel(int uv_size) : uv_size_(uv_size) {
  if (uv_size < 16) throw ConfigError("uv_size must be at least 16");
}

void BodyModel::surface(double row, double col, const BodyPose& pose, double height, na::Vec3& pos,
                        na::Vec3& normal) const {
  const double f = row / uv_size_;
  const double g = col / uv_size_;
  if (f < kHeadEnd) {
    const double psi = (f / kHeadEnd) * 0.8 * kPi;
    const double theta = 2.0 * kPi * g;
    normal = {std::sin(psi) * std::sin(theta), std::sin(psi) * std::cos(theta), std::cos(psi)};
    pos = na::Vec3(0.0, 0.0, kHeadCenterZ) + kHeadRadius * normal;
  } else if (f < kTorsoEnd) {
    const double t = (f - kHeadEnd) / (kTorsoEnd - kHeadEnd);
    const double theta = 2.0 * kPi * g;
    if (t < 0.2) {
      // Shoulder cap: a flat half-ellipsoid on top of the torso cylinder.
      const double alpha = (20.0 + 70.0 * (t / 0.2)) * kPi / 180.0;
      pos = {kTorsoRx * std::sin(alpha) * std::sin(theta), kTorsoRy * std::sin(alpha) * std::cos(theta),
             kTorsoTop + kCapHeight * std::cos(alpha)};
      normal = {pos.x() / (kTorsoRx * kTorsoRx), pos.y() / (kTorsoRy * kTorsoRy),
                (pos.z() - kTorsoTop) / (kCapHeight * kCapHeight)};
    } else {
      const double a = (t - 0.2) / 0.8;
      pos = {kTorsoRx * std::sin(theta), kTorsoRy * std::cos(theta), kTorsoTop - a * (kTorsoTop - kTorsoBottom)};
      normal = {std::sin(theta) / kTorsoRx, std::cos(theta) / kTorsoRy, 0.0};
    }
    normal.normalize();
  } else {
    const bool arm = f < kArmEnd;
    const double t = arm ? (f - kTorsoEnd) / (kArmEnd - kTorsoEnd) : (f - kArmEnd) / (1.0 - kArmEnd);
    const bool left = g < 0.5;
    const double theta = 2.0 * kPi * std::fmod(g * 2.0, 1.0);
    const double radius = arm ? kArmRadius : kLegRadius;
    const double length = arm ? kArmLength : kLegLength;
    const na::Vec3 pivot = arm ? na::Vec3(left ? 0.17 : -0.17, 0.0, 0.82) : na::Vec3(left ? 0.065 : -0.065, 0.0, 0.50);
    const double swing = arm ? (left ? pose.left_arm : pose.right_arm) : (left ? pose.left_leg : pose.right_leg);
    const na::Vec3 local(radius * std::sin(theta), radius * std::cos(theta), -t * length);
    normal = rotate_x(na::Vec3(std::sin(theta), std::cos(theta), 0.0), swing);
    pos = pivot + rotate_x(local, swing);
  }
  pos *= height;
}

std::vector<na::Vec3> BodyModel::texel_normals(const BodyPose& pose) const {
  std::vector<na::Vec3> out;
  out.reserve(static_cast<std::size_t>(uv_size_) * static_cast<std::size_t>(uv_size_));
  na::Vec3 p;
  na::Vec3 n;
  for (int r = 0; r < uv_size_; ++r) {
    for (int c = 0; c < uv_size_; ++c) {
      surface(r + 0.5, c + 0.5, pose, 1.0, p, n);
      out.push_back(n);
    }
  }
  return out;
}

std::vector<na::Vec3> BodyModel::texel_coords(double height) const {
  std::vector<na::Vec3> out;
  out.reserve(static_cast<std::size_t>(uv_size_) * static_cast<std::size_t>(uv_size_));
  na::Vec3 p;
  na::Vec3 n;
  for (int r = 0; r < uv_size_; ++r) {
    for (int c = 0; c < uv_size_; ++c) {
      surface(r + 0.5, c + 0.5, BodyPose{}, height, p, n);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace agvp::datagen
