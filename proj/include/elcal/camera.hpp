#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "elcal/error.hpp"
#include "elcal/model.hpp"

namespace elcal {

/// Points closer to the image plane than this are rejected by the projection.
inline constexpr double kMinDepth = 1e-6;

class BehindCameraError : public Error {
 public:
  explicit BehindCameraError(double depth)
      : Error("point at depth " + std::to_string(depth) + " m is at or behind the image plane"), depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

using Matrix23d = Eigen::Matrix<double, 2, 3>;

/// Effective 2x2 pixel covariance (px^2) of a marker observation under virtual noise.
struct EffectivePixelCovariance {
  Eigen::Matrix2d matrix = Eigen::Matrix2d::Identity();
};

inline Eigen::Vector3d to_camera_frame(const Eigen::Vector3d& x_world, const Eigen::Isometry3d& camera) {
  return camera.linear().transpose() * (x_world - camera.translation());
}

namespace detail {

inline Eigen::Vector3d checked_camera_point(const Eigen::Vector3d& x_world, const Eigen::Isometry3d& camera) {
  const Eigen::Vector3d xc = to_camera_frame(x_world, camera);
  if (!(xc.z() > kMinDepth)) throw BehindCameraError(xc.z());
  return xc;
}

}  // namespace detail

/// u = c + f .* D(P(x_c)), P(x) = (x/z, y/z), D(v) = v / (1 + xi |v|^2).
inline Eigen::Vector2d project(const Eigen::Vector3d& x_world, const Eigen::Isometry3d& camera,
                               const CameraIntrinsics& intr) {
  const Eigen::Vector3d xc = detail::checked_camera_point(x_world, camera);
  const Eigen::Vector2d v(xc.x() / xc.z(), xc.y() / xc.z());
  const Eigen::Vector2d distorted = v / (1.0 + intr.distortion * v.squaredNorm());
  return intr.center + intr.focal.cwiseProduct(distorted);
}

/// d project / d x_world, including the distortion term.
inline Matrix23d projection_jacobian(const Eigen::Vector3d& x_world, const Eigen::Isometry3d& camera,
                                     const CameraIntrinsics& intr) {
  const Eigen::Vector3d xc = detail::checked_camera_point(x_world, camera);
  const double iz = 1.0 / xc.z();
  const Eigen::Vector2d v(xc.x() * iz, xc.y() * iz);
  Matrix23d dp;
  dp << iz, 0.0, -xc.x() * iz * iz,
        0.0, iz, -xc.y() * iz * iz;
  const double s = 1.0 + intr.distortion * v.squaredNorm();
  const Eigen::Matrix2d dd =
      Eigen::Matrix2d::Identity() / s - (2.0 * intr.distortion / (s * s)) * v * v.transpose();
  return intr.focal.asDiagonal() * dd * dp * camera.linear().transpose();
}

/// sigma_u^2 I + sigma_x^2 J J^T with J the distortion-free projection Jacobian, written in
/// closed form. Anisotropic focal lengths scale rows and columns independently.
inline EffectivePixelCovariance effective_covariance(const Eigen::Vector3d& x_world, const Eigen::Isometry3d& camera,
                                                     const CameraIntrinsics& intr, double sigma_u, double sigma_x) {
  const Eigen::Vector3d xc = detail::checked_camera_point(x_world, camera);
  const double z2 = xc.z() * xc.z();
  Eigen::Matrix2d shape;
  shape << 1.0 + xc.x() * xc.x() / z2, xc.x() * xc.y() / z2,
           xc.x() * xc.y() / z2, 1.0 + xc.y() * xc.y() / z2;
  const Eigen::Matrix2d virt =
      (sigma_x * sigma_x / z2) * (intr.focal.asDiagonal() * shape * intr.focal.asDiagonal()).eval();
  EffectivePixelCovariance c;
  c.matrix = sigma_u * sigma_u * Eigen::Matrix2d::Identity() + virt;
  c.matrix(1, 0) = c.matrix(0, 1);
  return c;
}

}  // namespace elcal
