#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "elcal/error.hpp"
#include "elcal/model.hpp"

namespace elcal {

/// World poses T_0_k of every joint frame, in joint order.
class FrameSet {
 public:
  FrameSet() = default;
  explicit FrameSet(std::vector<Eigen::Isometry3d> frames) : frames_(std::move(frames)) {}

  /// Pose of frame `k`; kWorldFrame yields the identity.
  Eigen::Isometry3d at(int k) const {
    return k == kWorldFrame ? Eigen::Isometry3d::Identity() : frames_.at(static_cast<std::size_t>(k));
  }
  const Eigen::Isometry3d& operator[](std::size_t k) const { return frames_[k]; }
  std::size_t size() const { return frames_.size(); }
  const std::vector<Eigen::Isometry3d>& frames() const { return frames_; }

 private:
  std::vector<Eigen::Isometry3d> frames_;
};

using DhSet = std::vector<DhParams>;

inline DhSet nominal_dh(const RobotModel& m) {
  DhSet rho;
  rho.reserve(m.joints.size());
  for (const auto& j : m.joints) rho.push_back(j.dh);
  return rho;
}

/// rot_z(theta + q) trans_z(d) trans_x(a) rot_x(alpha)
inline Eigen::Isometry3d dh_transform(const DhParams& p, double q) {
  const double th = p.theta + q;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(p.alpha), sa = std::sin(p.alpha);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() << ct, -st * ca, st * sa,
                st, ct * ca, -ct * sa,
                0.0, sa, ca;
  t.translation() << p.a * ct, p.a * st, p.d;
  return t;
}

/// Joint angle seen by the geometry, including the unmodelled ripple of synthetic truth models.
inline double effective_angle(const RobotModel& m, int k, double q) {
  if (!m.ripple) return q;
  const JointRipple& r = *m.ripple;
  return q + r.amplitude * std::sin(2.0 * M_PI * q / r.period + r.phase[static_cast<std::size_t>(k)]);
}

namespace detail {

inline void check_lengths(const RobotModel& m, const Eigen::VectorXd& q, const DhSet* rho) {
  if (q.size() != m.joint_count())
    throw Error("joint vector has length " + std::to_string(q.size()) + ", model has " +
                std::to_string(m.joint_count()) + " joints");
  if (rho && rho->size() != m.joints.size())
    throw Error("DH set has length " + std::to_string(rho->size()) + ", model has " +
                std::to_string(m.joint_count()) + " joints");
}

}  // namespace detail

inline FrameSet forward_kinematics(const Eigen::VectorXd& q, const DhSet& rho, const RobotModel& m) {
  detail::check_lengths(m, q, &rho);
  std::vector<Eigen::Isometry3d> frames(m.joints.size());
  for (std::size_t k = 0; k < m.joints.size(); ++k) {
    const int parent = m.joints[k].parent;
    const Eigen::Isometry3d local = dh_transform(rho[k], effective_angle(m, static_cast<int>(k), q[static_cast<Eigen::Index>(k)]));
    frames[k] = parent == kWorldFrame ? local : frames[static_cast<std::size_t>(parent)] * local;
  }
  return FrameSet(std::move(frames));
}

inline Eigen::Vector3d marker_world(const FrameSet& frames, const MarkerMount& mount) {
  return frames.at(mount.frame) * mount.position;
}

inline Eigen::Isometry3d camera_pose(const FrameSet& frames, const CameraMount& mount) {
  return frames.at(mount.frame) * mount.local_pose();
}

/// Static gravity torque about each joint axis. Joint k rotates about the z-axis of its
/// parent frame, through the parent frame origin, and carries every link of its subtree.
inline std::vector<double> gravity_torques(const FrameSet& frames, const RobotModel& m) {
  const std::size_t n = m.joints.size();
  std::vector<double> subtree_mass(n, 0.0);
  std::vector<Eigen::Vector3d> subtree_moment(n, Eigen::Vector3d::Zero());  // sum of m * com
  for (std::size_t k = 0; k < n; ++k) {
    subtree_mass[k] = m.joints[k].mass;
    subtree_moment[k] = m.joints[k].mass * (frames[k] * m.joints[k].center_of_mass);
  }
  // Children always follow their parent, so a reverse sweep accumulates whole subtrees.
  for (std::size_t k = n; k-- > 0;) {
    const int parent = m.joints[k].parent;
    if (parent == kWorldFrame) continue;
    subtree_mass[static_cast<std::size_t>(parent)] += subtree_mass[k];
    subtree_moment[static_cast<std::size_t>(parent)] += subtree_moment[k];
  }
  std::vector<double> tau(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Isometry3d axis_frame = frames.at(m.joints[k].parent);
    const Eigen::Vector3d origin = axis_frame.translation();
    const Eigen::Vector3d axis = axis_frame.linear().col(2);
    const Eigen::Vector3d lever = subtree_moment[k] - subtree_mass[k] * origin;
    tau[k] = axis.dot(lever.cross(m.gravity));
  }
  return tau;
}

inline std::vector<double> gravity_torques(const Eigen::VectorXd& q, const DhSet& rho, const RobotModel& m) {
  return gravity_torques(forward_kinematics(q, rho, m), m);
}

/// rho[k][c] = rho0[k][c] + elasticity[k][c] * tau[k]
inline DhSet elastic_dh(const DhSet& rho0, const DhSet& elasticity, const std::vector<double>& tau) {
  if (rho0.size() != elasticity.size() || rho0.size() != tau.size())
    throw Error("elastic_dh: inconsistent lengths");
  DhSet rho = rho0;
  for (std::size_t k = 0; k < rho.size(); ++k)
    for (DhComponent c : kDhComponents) rho[k][c] += elasticity[k][c] * tau[k];
  return rho;
}

struct EquilibriumOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

struct Equilibrium {
  DhSet rho;
  FrameSet frames;
  int iterations = 0;
  /// Largest component change of the last iteration.
  double last_change = 0.0;
};

class EquilibriumError : public Error {
 public:
  EquilibriumError(int iterations, double residual)
      : Error("torque equilibrium did not converge after " + std::to_string(iterations) +
              " iterations (last change " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Fixed point of rho -> rho0 + C tau(q, rho), iterated from rho0.
inline Equilibrium solve_equilibrium(const Eigen::VectorXd& q, const RobotModel& m,
                                     const EquilibriumOptions& opts = {}) {
  detail::check_lengths(m, q, nullptr);
  const DhSet rho0 = nominal_dh(m);
  DhSet compliance;
  compliance.reserve(m.joints.size());
  bool rigid = true;
  for (const auto& j : m.joints) {
    compliance.push_back(j.elasticity);
    rigid = rigid && j.elasticity == DhParams{};
  }
  Equilibrium eq{rho0, forward_kinematics(q, rho0, m), 0, 0.0};
  if (rigid) {
    eq.iterations = 1;
    return eq;
  }
  for (int it = 1; it <= opts.max_iterations; ++it) {
    DhSet next = elastic_dh(rho0, compliance, gravity_torques(eq.frames, m));
    double change = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k)
      for (DhComponent c : kDhComponents) change = std::max(change, std::abs(next[k][c] - eq.rho[k][c]));
    if (!std::isfinite(change)) throw EquilibriumError(it, change);
    eq.rho = std::move(next);
    eq.frames = forward_kinematics(q, eq.rho, m);
    eq.iterations = it;
    eq.last_change = change;
    if (change < opts.tolerance) return eq;
  }
  throw EquilibriumError(opts.max_iterations, eq.last_change);
}

}  // namespace elcal
