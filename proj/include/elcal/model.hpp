#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "elcal/error.hpp"

namespace elcal {

/// Frame index used by mounts and spheres that are fixed in the world.
inline constexpr int kWorldFrame = -1;

enum class DhComponent { d = 0, theta = 1, a = 2, alpha = 3 };

inline constexpr std::array<DhComponent, 4> kDhComponents = {DhComponent::d, DhComponent::theta,
                                                             DhComponent::a, DhComponent::alpha};

inline std::string_view to_string(DhComponent c) {
  switch (c) {
    case DhComponent::d: return "d";
    case DhComponent::theta: return "theta";
    case DhComponent::a: return "a";
    case DhComponent::alpha: return "alpha";
  }
  return "?";
}

/// Classic Denavit-Hartenberg parameters: rot_z(theta) trans_z(d) trans_x(a) rot_x(alpha).
/// Lengths in meters, angles in radians.
struct DhParams {
  double d = 0.0;
  double theta = 0.0;
  double a = 0.0;
  double alpha = 0.0;

  double& operator[](DhComponent c) {
    switch (c) {
      case DhComponent::d: return d;
      case DhComponent::theta: return theta;
      case DhComponent::a: return a;
      case DhComponent::alpha: return alpha;
    }
    return d;
  }
  double operator[](DhComponent c) const { return const_cast<DhParams&>(*this)[c]; }

  bool finite() const {
    return std::isfinite(d) && std::isfinite(theta) && std::isfinite(a) && std::isfinite(alpha);
  }

  friend bool operator==(const DhParams&, const DhParams&) = default;
};

/// One revolute joint of the kinematic tree together with the link it moves.
///
/// `elasticity` holds, per DH component, the compliance mapping this joint's scalar
/// gravity torque to a perturbation of that component (rad/Nm or m/Nm). The theta
/// entry is the joint elasticity, the other three are lateral elasticities.
struct Joint {
  std::string name;
  int parent = kWorldFrame;
  DhParams dh;
  DhParams elasticity;
  double q_min = -M_PI;
  double q_max = M_PI;
  double mass = 0.0;
  Eigen::Vector3d center_of_mass = Eigen::Vector3d::Zero();
  /// Pan/tilt joint used to re-aim the camera during head sweeps.
  bool head = false;
};

struct CameraIntrinsics {
  Eigen::Vector2d focal{500.0, 500.0};
  Eigen::Vector2d center{320.0, 240.0};
  double distortion = 0.0;
  Eigen::Vector2d image_size{640.0, 480.0};
};

/// Rigid camera pose relative to its attached frame. The rotation is stored as a
/// rotation vector (axis * angle) so that it maps one-to-one onto free parameters.
struct CameraMount {
  int frame = kWorldFrame;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();

  Eigen::Isometry3d local_pose() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    const double angle = rotation.norm();
    if (angle > 0.0) t.linear() = Eigen::AngleAxisd(angle, rotation / angle).toRotationMatrix();
    t.translation() = translation;
    return t;
  }
};

/// A point marker rigidly attached to a frame. `normal` is the outward facing
/// direction in the attached frame, used only for visibility planning.
struct MarkerMount {
  std::string name;
  int frame = kWorldFrame;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

struct Sphere {
  int frame = kWorldFrame;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.1;
};

/// Unmodelled periodic joint-angle error q -> q + amplitude * sin(2 pi q / period + phase).
/// Only present on synthetic "real world" models; no parameter path reaches it.
struct JointRipple {
  double amplitude = 0.0;
  double period = 1.0;
  std::vector<double> phase;  // one per joint
};

struct RobotModel {
  std::vector<Joint> joints;
  CameraMount camera;
  CameraIntrinsics intrinsics;
  std::vector<MarkerMount> markers;
  std::vector<Sphere> spheres;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
  std::optional<JointRipple> ripple;

  int joint_count() const { return static_cast<int>(joints.size()); }

  int marker_index(std::string_view name) const {
    for (std::size_t i = 0; i < markers.size(); ++i)
      if (markers[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const MarkerMount& marker(std::string_view name) const {
    const int i = marker_index(name);
    if (i < 0) throw Error("unknown marker '" + std::string(name) + "'");
    return markers[static_cast<std::size_t>(i)];
  }

  std::vector<int> head_joints() const {
    std::vector<int> out;
    for (int k = 0; k < joint_count(); ++k)
      if (joints[static_cast<std::size_t>(k)].head) out.push_back(k);
    return out;
  }
};

/// Throws Error describing the first violated structural invariant.
inline void validate(const RobotModel& m) {
  const int n = m.joint_count();
  auto where = [](const std::string& what, std::size_t i) {
    return what + "[" + std::to_string(i) + "]";
  };
  for (std::size_t k = 0; k < m.joints.size(); ++k) {
    const Joint& j = m.joints[k];
    if (j.parent != kWorldFrame && (j.parent < 0 || j.parent >= static_cast<int>(k)))
      throw Error(where("joints", k) + ".parent: must reference an earlier joint or be -1");
    if (!j.dh.finite() || !j.elasticity.finite())
      throw Error(where("joints", k) + ": non-finite DH or elasticity value");
    if (!(j.q_min <= j.q_max)) throw Error(where("joints", k) + ".limits: q_min > q_max");
    if (!(j.mass >= 0.0)) throw Error(where("joints", k) + ".mass: must be >= 0");
    if (!j.center_of_mass.allFinite()) throw Error(where("joints", k) + ".center_of_mass: non-finite");
  }
  auto valid_frame = [n](int f) { return f == kWorldFrame || (f >= 0 && f < n); };
  if (!valid_frame(m.camera.frame)) throw Error("camera.frame: not a valid joint index");
  if (!m.camera.translation.allFinite() || !m.camera.rotation.allFinite())
    throw Error("camera.mount: non-finite pose");
  const CameraIntrinsics& in = m.intrinsics;
  if (!(in.focal.x() > 0.0 && in.focal.y() > 0.0)) throw Error("camera.intrinsics.focal: must be > 0");
  for (int i = 0; i < 2; ++i)
    if (!(in.center[i] >= 0.0 && in.center[i] < in.image_size[i]))
      throw Error("camera.intrinsics.center: must lie inside the image");
  if (!std::isfinite(in.distortion)) throw Error("camera.intrinsics.distortion: non-finite");
  std::set<std::string> names;
  for (std::size_t i = 0; i < m.markers.size(); ++i) {
    const MarkerMount& mk = m.markers[i];
    if (mk.name.empty()) throw Error(where("markers", i) + ".name: empty");
    if (!names.insert(mk.name).second) throw Error(where("markers", i) + ".name: duplicate '" + mk.name + "'");
    if (!valid_frame(mk.frame)) throw Error(where("markers", i) + ".frame: not a valid joint index");
    if (!mk.position.allFinite()) throw Error(where("markers", i) + ".position: non-finite");
    if (!(mk.normal.norm() > 0.0)) throw Error(where("markers", i) + ".normal: must be non-zero");
  }
  for (std::size_t i = 0; i < m.spheres.size(); ++i) {
    if (!valid_frame(m.spheres[i].frame)) throw Error(where("spheres", i) + ".frame: not a valid joint index");
    if (!(m.spheres[i].radius > 0.0)) throw Error(where("spheres", i) + ".radius: must be > 0");
  }
  if (!m.gravity.allFinite()) throw Error("gravity: non-finite");
  if (m.ripple && m.ripple->phase.size() != m.joints.size())
    throw Error("ripple.phase: length must equal the joint count");
  if (m.ripple && !(m.ripple->period > 0.0)) throw Error("ripple.period: must be > 0");
}

// ---------------------------------------------------------------------------
// Parameter paths

enum class ParameterKind { joint_dh, joint_elasticity, camera_mount, intrinsic, marker_position };

/// Resolved location of one scalar inside a RobotModel.
struct ParameterPath {
  ParameterKind kind{};
  int index = 0;      // joint index or marker index
  int component = 0;  // DH component, mount component (tx..rz), intrinsic (fx,fy,cx,cy,xi), or axis

  friend bool operator==(const ParameterPath&, const ParameterPath&) = default;
};

namespace detail {

inline std::vector<std::string> split_path(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = s.find('/', start);
    out.emplace_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline int find_name(std::string_view s, std::initializer_list<std::string_view> names) {
  int i = 0;
  for (auto n : names) {
    if (n == s) return i;
    ++i;
  }
  return -1;
}

}  // namespace detail

/// Parses paths of the form
///   joints/<index|name>/dh/<d|theta|a|alpha>
///   joints/<index|name>/elasticity/<d|theta|a|alpha>
///   camera/mount/<tx|ty|tz|rx|ry|rz>
///   camera/intrinsics/<fx|fy|cx|cy|xi>
///   markers/<name>/<x|y|z>
inline ParameterPath parse_path(std::string_view path, const RobotModel& m) {
  const auto parts = detail::split_path(path);
  auto fail = [&](const std::string& why) -> ParameterPath {
    throw Error("invalid parameter path '" + std::string(path) + "': " + why);
  };
  if (parts.size() == 4 && parts[0] == "joints") {
    int index = -1;
    for (int k = 0; k < m.joint_count(); ++k)
      if (m.joints[static_cast<std::size_t>(k)].name == parts[1]) index = k;
    if (index < 0) {
      char* end = nullptr;
      const long v = std::strtol(parts[1].c_str(), &end, 10);
      if (!parts[1].empty() && *end == '\0' && v >= 0 && v < m.joint_count()) index = static_cast<int>(v);
    }
    if (index < 0) return fail("no joint '" + parts[1] + "'");
    ParameterKind kind{};
    if (parts[2] == "dh")
      kind = ParameterKind::joint_dh;
    else if (parts[2] == "elasticity")
      kind = ParameterKind::joint_elasticity;
    else
      return fail("expected 'dh' or 'elasticity'");
    const int c = detail::find_name(parts[3], {"d", "theta", "a", "alpha"});
    if (c < 0) return fail("unknown DH component '" + parts[3] + "'");
    return {kind, index, c};
  }
  if (parts.size() == 3 && parts[0] == "camera" && parts[1] == "mount") {
    const int c = detail::find_name(parts[2], {"tx", "ty", "tz", "rx", "ry", "rz"});
    if (c < 0) return fail("unknown mount component '" + parts[2] + "'");
    return {ParameterKind::camera_mount, 0, c};
  }
  if (parts.size() == 3 && parts[0] == "camera" && parts[1] == "intrinsics") {
    const int c = detail::find_name(parts[2], {"fx", "fy", "cx", "cy", "xi"});
    if (c < 0) return fail("unknown intrinsic '" + parts[2] + "'");
    return {ParameterKind::intrinsic, 0, c};
  }
  if (parts.size() == 3 && parts[0] == "markers") {
    const int index = m.marker_index(parts[1]);
    if (index < 0) return fail("no marker '" + parts[1] + "'");
    const int c = detail::find_name(parts[2], {"x", "y", "z"});
    if (c < 0) return fail("unknown marker axis '" + parts[2] + "'");
    return {ParameterKind::marker_position, index, c};
  }
  return fail("unrecognized path");
}

inline double& parameter_ref(RobotModel& m, const ParameterPath& p) {
  switch (p.kind) {
    case ParameterKind::joint_dh:
      return m.joints[static_cast<std::size_t>(p.index)].dh[static_cast<DhComponent>(p.component)];
    case ParameterKind::joint_elasticity:
      return m.joints[static_cast<std::size_t>(p.index)].elasticity[static_cast<DhComponent>(p.component)];
    case ParameterKind::camera_mount:
      return p.component < 3 ? m.camera.translation[p.component] : m.camera.rotation[p.component - 3];
    case ParameterKind::intrinsic:
      switch (p.component) {
        case 0: return m.intrinsics.focal.x();
        case 1: return m.intrinsics.focal.y();
        case 2: return m.intrinsics.center.x();
        case 3: return m.intrinsics.center.y();
        default: return m.intrinsics.distortion;
      }
    case ParameterKind::marker_position:
      return m.markers[static_cast<std::size_t>(p.index)].position[p.component];
  }
  throw Error("unreachable parameter kind");
}

inline double parameter_value(const RobotModel& m, const ParameterPath& p) {
  return parameter_ref(const_cast<RobotModel&>(m), p);
}

// ---------------------------------------------------------------------------
// Parameter specification

struct ParameterEntry {
  std::string path;
  bool free = true;
  /// Defaults to the model's value at the time the problem is set up.
  std::optional<double> prior_mean;
  /// Standard deviation of the Gaussian prior; +infinity means unbounded.
  double prior_sigma = std::numeric_limits<double>::infinity();
};

struct ParameterSpec {
  std::vector<ParameterEntry> entries;

  std::size_t free_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.free ? 1 : 0;
    return n;
  }
};

/// Free entries of a spec resolved against a model.
struct ResolvedSpec {
  std::vector<std::string> names;
  std::vector<ParameterPath> paths;
  Eigen::VectorXd prior_mean;
  Eigen::VectorXd prior_sigma;

  std::size_t size() const { return paths.size(); }
};

inline ResolvedSpec resolve(const ParameterSpec& spec, const RobotModel& model) {
  ResolvedSpec r;
  std::vector<ParameterPath> all;
  for (const auto& e : spec.entries) {
    const ParameterPath p = parse_path(e.path, model);
    for (const auto& q : all)
      if (q == p) throw Error("duplicate parameter path '" + e.path + "'");
    all.push_back(p);
    if (!(e.prior_sigma > 0.0))
      throw Error("parameter '" + e.path + "': prior_sigma must be > 0 or unbounded");
    if (e.prior_mean && !std::isfinite(*e.prior_mean))
      throw Error("parameter '" + e.path + "': prior_mean must be finite");
    if (!e.free) continue;
    r.names.push_back(e.path);
    r.paths.push_back(p);
  }
  const auto n = static_cast<Eigen::Index>(r.paths.size());
  r.prior_mean.resize(n);
  r.prior_sigma.resize(n);
  Eigen::Index i = 0;
  for (const auto& e : spec.entries) {
    if (!e.free) continue;
    r.prior_mean[i] = e.prior_mean.value_or(parameter_value(model, r.paths[static_cast<std::size_t>(i)]));
    r.prior_sigma[i] = e.prior_sigma;
    ++i;
  }
  return r;
}

using ParameterVector = Eigen::VectorXd;

/// Flat vector of the free parameter values, in spec order. Values are absolute.
inline ParameterVector pack(const RobotModel& model, const ParameterSpec& spec) {
  const ResolvedSpec r = resolve(spec, model);
  ParameterVector theta(static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) theta[static_cast<Eigen::Index>(i)] = parameter_value(model, r.paths[i]);
  return theta;
}

inline RobotModel unpack(const ParameterVector& theta, const RobotModel& model, const std::vector<ParameterPath>& paths) {
  if (static_cast<std::size_t>(theta.size()) != paths.size())
    throw Error("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                std::to_string(paths.size()));
  if (!theta.allFinite()) throw Error("parameter vector contains non-finite values");
  RobotModel out = model;
  for (std::size_t i = 0; i < paths.size(); ++i) parameter_ref(out, paths[i]) = theta[static_cast<Eigen::Index>(i)];
  return out;
}

inline RobotModel unpack(const ParameterVector& theta, const RobotModel& model, const ParameterSpec& spec) {
  return unpack(theta, model, resolve(spec, model).paths);
}

// ---------------------------------------------------------------------------
// Measurements

struct MeasurementSample {
  Eigen::VectorXd q;
  std::string marker;
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
};

/// A planned measurement configuration: joint angles plus the marker to observe.
struct Configuration {
  Eigen::VectorXd q;
  std::string marker;
};

inline bool within_limits(const RobotModel& m, const Eigen::VectorXd& q) {
  for (int k = 0; k < m.joint_count(); ++k) {
    const Joint& j = m.joints[static_cast<std::size_t>(k)];
    if (q[k] < j.q_min || q[k] > j.q_max) return false;
  }
  return true;
}

}  // namespace elcal
