#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "elcal/model.hpp"
#include "elcal/synth.hpp"

namespace elcal::demo {

/// Upper-body humanoid with 19 joints: torso yaw/pitch/pitch, neck tilt/pan carrying the
/// camera, and two 7-joint arms. Markers on both wrists and on a pole in front of the robot.
///
/// World axes: x forward, y left, z up. The joint axes hanging off the chest frame (neck
/// tilt and both shoulders) all run laterally through the top of the torso.
inline RobotModel humanoid() {
  constexpr double pi = M_PI;
  RobotModel m;
  auto add = [&m](std::string name, int parent, DhParams dh, double lo, double hi, double mass,
                  Eigen::Vector3d com) -> Joint& {
    Joint j;
    j.name = std::move(name);
    j.parent = parent;
    j.dh = dh;
    j.q_min = lo;
    j.q_max = hi;
    j.mass = mass;
    j.center_of_mass = com;
    m.joints.push_back(j);
    return m.joints.back();
  };

  // Torso: yaw about the vertical, then two pitch joints about the lateral axis.
  add("torso_yaw", kWorldFrame, {0.40, 0.0, 0.0, pi / 2}, -0.8, 0.8, 8.0, {0.0, 0.10, 0.0});
  add("torso_pitch_1", 0, {0.0, pi / 2, 0.30, 0.0}, -0.6, 0.2, 10.0, {-0.15, 0.0, 0.0}).elasticity = {0.0, 1.5e-4, 0.0, 6e-5};
  add("torso_pitch_2", 1, {0.0, 0.0, 0.30, 0.0}, -0.4, 0.5, 12.0, {-0.10, 0.0, 0.0}).elasticity = {0.0, 1.2e-4, 0.0, 5e-5};

  // Neck: tilt (lateral axis, positive looks up) then pan (vertical axis).
  add("neck_tilt", 2, {0.0, -pi / 2, 0.08, -pi / 2}, -1.6, 0.6, 0.5, {0.0, 0.0, 0.05}).head = true;
  add("neck_pan", 3, {0.15, 0.0, 0.05, 0.0}, -1.6, 1.6, 2.5, {-0.03, 0.0, 0.02}).head = true;

  // Arms: shoulder pitch (lateral), shoulder roll (forward), upper-arm rotation, elbow,
  // forearm rotation, wrist, hand rotation. Straight down at q = 0.
  for (const double side : {1.0, -1.0}) {
    const int base = m.joint_count();
    const std::string p = side > 0 ? "left_" : "right_";
    add(p + "shoulder_pitch", 2, {-side * 0.22, pi, 0.0, -pi / 2}, -0.8, 2.5, 1.5, {0.0, 0.0, 0.0})
        .elasticity = {0.0, 4e-4, 0.0, 0.0};
    add(p + "shoulder_roll", base, {0.0, -pi / 2, 0.0, -pi / 2}, -1.2, 1.2, 1.5, {0.0, 0.0, 0.08})
        .elasticity = {0.0, 4e-4, 0.0, 0.0};
    add(p + "upper_arm", base + 1, {0.28, pi / 2, 0.0, pi / 2}, -2.0, 2.0, 2.0, {0.0, -0.10, 0.0});
    add(p + "elbow", base + 2, {0.0, 0.0, 0.0, -pi / 2}, 0.0, 2.2, 1.2, {0.0, 0.0, 0.08})
        .elasticity = {0.0, 5e-4, 0.0, 0.0};
    add(p + "forearm", base + 3, {0.26, pi / 2, 0.0, pi / 2}, -2.5, 2.5, 1.0, {0.0, -0.08, 0.0});
    add(p + "wrist", base + 4, {0.0, 0.0, 0.0, -pi / 2}, -1.5, 1.5, 0.5, {0.0, 0.0, 0.02});
    add(p + "hand", base + 5, {0.10, 0.0, 0.0, 0.0}, -2.5, 2.5, 0.4, {0.0, 0.0, -0.02});
  }

  // Camera on the pan link, looking along the link's +x with image x to the right.
  Eigen::Matrix3d r;
  r.col(0) = -Eigen::Vector3d::UnitY();
  r.col(1) = -Eigen::Vector3d::UnitZ();
  r.col(2) = Eigen::Vector3d::UnitX();
  const Eigen::AngleAxisd aa(r);
  m.camera.frame = 4;
  m.camera.translation = {0.03, 0.0, 0.05};
  m.camera.rotation = aa.angle() * aa.axis();
  m.intrinsics.focal = {520.0, 520.0};
  m.intrinsics.center = {320.0, 240.0};
  m.intrinsics.distortion = 0.05;
  m.intrinsics.image_size = {640.0, 480.0};

  m.markers.push_back({"left", 11, {0.04, 0.0, 0.02}, {1.0, 0.0, 0.0}});
  m.markers.push_back({"right", 18, {0.04, 0.0, 0.02}, {1.0, 0.0, 0.0}});
  m.markers.push_back({"pole", kWorldFrame, {1.25, 0.0, 0.70}, Eigen::Vector3d(-1.0, 0.0, 0.3).normalized()});

  m.spheres = {
      {1, {-0.15, 0.0, 0.0}, 0.15},   // abdomen
      {2, {-0.10, 0.0, 0.0}, 0.16},   // chest
      {4, {-0.06, 0.0, 0.04}, 0.09},  // head
      {kWorldFrame, {1.25, 0.0, 0.35}, 0.04},  // pole
  };
  for (const int wrist_base : {5, 12}) {
    m.spheres.push_back({wrist_base + 2, {0.0, -0.14, 0.0}, 0.06});  // upper arm
    m.spheres.push_back({wrist_base + 4, {0.0, -0.13, 0.0}, 0.05});  // forearm
    m.spheres.push_back({wrist_base + 6, {0.0, 0.0, -0.04}, 0.04});  // hand
  }
  return m;
}

/// Free parameters of the demo calibration: every DH component that is not a gauge
/// freedom, the elasticities that see gravity torque, camera mount, intrinsics and the
/// wrist markers.
///
/// Fixed on purpose: torso yaw d/theta (no world reference can tell them apart from the
/// base), d of the second torso pitch (parallel to the first), the neck pan DH and the hand
/// DH (absorbed by the camera mount and the marker positions respectively), and the pole
/// marker, which is a surveyed world point. With the pole free, a rotation of the whole robot
/// about its base is only held in place by gravity and the world positions drift by
/// centimeters while the pixel fit stays at the noise floor.
inline ParameterSpec humanoid_spec(const RobotModel& m) {
  ParameterSpec spec;
  auto dh = [&](int k, std::initializer_list<const char*> comps, double length_sigma, double angle_sigma) {
    for (const char* c : comps) {
      const bool angle = std::string(c) == "theta" || std::string(c) == "alpha";
      spec.entries.push_back({"joints/" + m.joints[static_cast<std::size_t>(k)].name + "/dh/" + c, true,
                              std::nullopt, angle ? angle_sigma : length_sigma});
    }
  };
  auto el = [&](int k, std::initializer_list<const char*> comps) {
    for (const char* c : comps)
      spec.entries.push_back({"joints/" + m.joints[static_cast<std::size_t>(k)].name + "/elasticity/" + c, true,
                              std::nullopt, 1e-3});
  };
  const double ls = 0.15, as = 0.2;  // about 10x the expected deviation
  dh(0, {"a", "alpha"}, ls, as);
  dh(1, {"d", "theta", "a", "alpha"}, ls, as);
  dh(2, {"theta", "a", "alpha"}, ls, as);
  dh(3, {"d", "theta", "a", "alpha"}, ls, as);
  for (const int base : {5, 12})
    for (int k = base; k < base + 6; ++k) dh(k, {"d", "theta", "a", "alpha"}, ls, as);
  el(1, {"theta", "alpha"});
  el(2, {"theta", "alpha"});
  for (const int base : {5, 12}) el(base, {"theta"}), el(base + 1, {"theta"}), el(base + 3, {"theta"});
  for (const char* c : {"tx", "ty", "tz"}) spec.entries.push_back({std::string("camera/mount/") + c, true, std::nullopt, ls});
  for (const char* c : {"rx", "ry", "rz"}) spec.entries.push_back({std::string("camera/mount/") + c, true, std::nullopt, as});
  for (const char* c : {"fx", "fy", "cx", "cy"})
    spec.entries.push_back({std::string("camera/intrinsics/") + c, true, std::nullopt, 50.0});
  spec.entries.push_back({"camera/intrinsics/xi", true, std::nullopt, 0.2});
  for (const auto& mk : m.markers) {
    if (mk.frame == kWorldFrame) continue;
    for (const char* c : {"x", "y", "z"}) spec.entries.push_back({"markers/" + mk.name + "/" + c, true, std::nullopt, ls});
  }
  return spec;
}

/// A spec at the scale of a full humanoid calibration (129 free entries): every DH
/// parameter, joint and lateral elasticities, camera mount, intrinsics and marker positions.
/// Several entries are gauge freedoms; use humanoid_spec for an identifiable problem.
inline ParameterSpec full_scale_spec(const RobotModel& m) {
  ParameterSpec spec;
  auto name = [&](int k) { return "joints/" + m.joints[static_cast<std::size_t>(k)].name; };
  for (int k = 0; k < m.joint_count(); ++k)
    for (const char* c : {"d", "theta", "a", "alpha"}) spec.entries.push_back({name(k) + "/dh/" + c, true, std::nullopt, 0.1});
  for (int k = 0; k < 3; ++k)
    for (const char* c : {"d", "theta", "a", "alpha"})
      spec.entries.push_back({name(k) + "/elasticity/" + c, true, std::nullopt, 1e-2});
  for (int k = 5; k < 19; ++k) spec.entries.push_back({name(k) + "/elasticity/theta", true, std::nullopt, 1e-2});
  for (const int k : {5, 6, 8, 12, 13, 15}) spec.entries.push_back({name(k) + "/elasticity/alpha", true, std::nullopt, 1e-2});
  spec.entries.push_back({name(4) + "/elasticity/theta", true, std::nullopt, 1e-2});
  for (const char* c : {"tx", "ty", "tz", "rx", "ry", "rz"})
    spec.entries.push_back({std::string("camera/mount/") + c, true, std::nullopt, 0.1});
  for (const char* c : {"fx", "fy", "cx", "cy", "xi"})
    spec.entries.push_back({std::string("camera/intrinsics/") + c, true, std::nullopt, 50.0});
  for (const auto& mk : m.markers)
    for (const char* c : {"x", "y", "z"}) spec.entries.push_back({"markers/" + mk.name + "/" + c, true, std::nullopt, 0.1});
  return spec;
}

/// Perturbation used by the demo: deviations of a few millimeters and milliradians per
/// parameter, adding up to several centimeters at the wrists.
inline PerturbationSpec perturbation() { return PerturbationSpec{}; }

}  // namespace elcal::demo
