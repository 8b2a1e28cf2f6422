#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elcal/camera.hpp"
#include "elcal/error.hpp"
#include "elcal/kinematics.hpp"
#include "elcal/model.hpp"
#include "elcal/rng.hpp"

namespace elcal {

/// How a synthetic "real" robot deviates from its nominal model. Only the free entries of
/// the calibration spec are perturbed, so the truth is reachable by the estimator; the
/// optional ripple is not.
struct PerturbationSpec {
  /// Standard deviation per DH component (m for d and a, rad for theta and alpha).
  DhParams dh_sigma{0.015, 0.022, 0.015, 0.022};
  /// Free elasticities are multiplied by a factor drawn uniformly from this range.
  double elasticity_scale_min = 0.7;
  double elasticity_scale_max = 1.3;
  double mount_length_sigma = 0.01;
  double mount_angle_sigma = 0.02;
  double marker_sigma = 0.01;
  double intrinsics_px_sigma = 4.0;
  double intrinsics_xi_sigma = 0.02;
  /// Unmodelled joint-angle ripple; amplitude 0 disables it.
  double ripple_amplitude = 0.0;
  double ripple_period = 0.5;

  void validate() const {
    const bool ok = dh_sigma.d >= 0 && dh_sigma.theta >= 0 && dh_sigma.a >= 0 && dh_sigma.alpha >= 0 &&
                    mount_length_sigma >= 0 && mount_angle_sigma >= 0 && marker_sigma >= 0 &&
                    intrinsics_px_sigma >= 0 && intrinsics_xi_sigma >= 0 && ripple_amplitude >= 0 &&
                    elasticity_scale_min >= 0 && elasticity_scale_min <= elasticity_scale_max && ripple_period > 0;
    if (!ok) throw Error("perturbation spec: sigmas and scales must be >= 0 and ranges ordered");
  }

  static PerturbationSpec none() {
    PerturbationSpec p;
    p.dh_sigma = {};
    p.elasticity_scale_min = p.elasticity_scale_max = 1.0;
    p.mount_length_sigma = p.mount_angle_sigma = p.marker_sigma = 0.0;
    p.intrinsics_px_sigma = p.intrinsics_xi_sigma = 0.0;
    return p;
  }
};

inline double standard_normal(std::mt19937_64& rng) {
  // Box-Muller on 53-bit uniforms; avoids the implementation-defined std::normal_distribution.
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Ground-truth robot: the nominal model with the spec's free entries perturbed.
inline RobotModel make_ground_truth(const RobotModel& nominal, const ParameterSpec& spec, const PerturbationSpec& p,
                                    std::uint64_t seed) {
  p.validate();
  const ResolvedSpec r = resolve(spec, nominal);
  RobotModel truth = nominal;
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::mt19937_64 rng = stream_rng(seed, i);
    const double z = standard_normal(rng);
    const ParameterPath& path = r.paths[i];
    double& v = parameter_ref(truth, path);
    switch (path.kind) {
      case ParameterKind::joint_dh:
        v += z * DhParams(p.dh_sigma)[static_cast<DhComponent>(path.component)];
        break;
      case ParameterKind::joint_elasticity: {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v *= p.elasticity_scale_min + u * (p.elasticity_scale_max - p.elasticity_scale_min);
        break;
      }
      case ParameterKind::camera_mount:
        v += z * (path.component < 3 ? p.mount_length_sigma : p.mount_angle_sigma);
        break;
      case ParameterKind::intrinsic:
        v += z * (path.component < 4 ? p.intrinsics_px_sigma : p.intrinsics_xi_sigma);
        break;
      case ParameterKind::marker_position:
        v += z * p.marker_sigma;
        break;
    }
  }
  if (p.ripple_amplitude > 0.0) {
    JointRipple ripple{p.ripple_amplitude, p.ripple_period, {}};
    for (int k = 0; k < truth.joint_count(); ++k) {
      std::mt19937_64 rng = stream_rng(seed ^ 0x5eed5eedULL, 1'000'000u + static_cast<std::uint64_t>(k));
      ripple.phase.push_back(2.0 * M_PI * static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }
    truth.ripple = std::move(ripple);
  }
  return truth;
}

struct SimulationResult {
  std::vector<MeasurementSample> samples;
  /// Indices of configurations that could not be observed on the truth model.
  std::vector<std::size_t> skipped;
};

/// u = project(marker in equilibrium) + N(0, sigma_u^2 I). Each configuration draws its
/// noise from its own counter-indexed stream.
inline SimulationResult simulate_measurements(const RobotModel& truth, const std::vector<Configuration>& configs,
                                              double sigma_u, std::uint64_t seed) {
  if (!(sigma_u >= 0.0)) throw Error("sigma_u must be >= 0");
  SimulationResult out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Configuration& c = configs[i];
    try {
      if (c.q.size() != truth.joint_count()) throw Error("joint vector length mismatch");
      const Equilibrium eq = solve_equilibrium(c.q, truth);
      const Eigen::Vector2d clean =
          project(marker_world(eq.frames, truth.marker(c.marker)), camera_pose(eq.frames, truth.camera), truth.intrinsics);
      std::mt19937_64 rng = stream_rng(seed, i);
      const double nx = standard_normal(rng);
      const double ny = standard_normal(rng);
      const Eigen::Vector2d u = sigma_u > 0.0 ? Eigen::Vector2d(clean + sigma_u * Eigen::Vector2d(nx, ny)) : clean;
      const Eigen::Vector2d& size = truth.intrinsics.image_size;
      if (u.x() < 0.0 || u.y() < 0.0 || u.x() > size.x() || u.y() > size.y()) throw Error("outside the image");
      out.samples.push_back({c.q, c.marker, u});
    } catch (const Error&) {
      out.skipped.push_back(i);
    }
  }
  return out;
}

/// Ground-truth world marker positions, the synthetic stand-in for an external tracker.
inline std::vector<Eigen::Vector3d> cartesian_reference(const RobotModel& truth,
                                                        const std::vector<Configuration>& configs) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(configs.size());
  for (const Configuration& c : configs)
    out.push_back(marker_world(solve_equilibrium(c.q, truth).frames, truth.marker(c.marker)));
  return out;
}

}  // namespace elcal
