#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elcal/demo.hpp"
#include "elcal/estimator.hpp"
#include "elcal/model.hpp"
#include "elcal/poseplan.hpp"
#include "elcal/synth.hpp"

namespace elcal::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Vector3d random_vector(std::mt19937_64& rng, double scale) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

/// Serial chain of n joints with the given link lengths along x and no twist.
inline RobotModel planar_chain(const std::vector<double>& a) {
  RobotModel m;
  for (std::size_t k = 0; k < a.size(); ++k) {
    Joint j;
    j.name = "j" + std::to_string(k);
    j.parent = static_cast<int>(k) - 1;
    j.dh.a = a[k];
    m.joints.push_back(j);
  }
  return m;
}

/// Random tree of n joints (parent drawn among earlier joints) with random DH, masses and
/// centers of mass. Elasticities are scaled by `compliance`.
inline RobotModel random_tree(std::mt19937_64& rng, int n, double compliance = 0.0) {
  RobotModel m;
  for (int k = 0; k < n; ++k) {
    Joint j;
    j.name = "j" + std::to_string(k);
    j.parent = k - 1;
    if (k > 0 && uniform(rng, 0.0, 1.0) < 0.3) j.parent = std::uniform_int_distribution<int>(-1, k - 1)(rng);
    j.dh = {uniform(rng, -0.3, 0.3), uniform(rng, -M_PI, M_PI), uniform(rng, -0.4, 0.4), uniform(rng, -M_PI, M_PI)};
    j.mass = uniform(rng, 0.2, 5.0);
    j.center_of_mass = random_vector(rng, 0.2);
    j.elasticity = {compliance * uniform(rng, 0.0, 1.0), compliance * uniform(rng, 0.0, 2.0),
                    compliance * uniform(rng, 0.0, 1.0), compliance * uniform(rng, 0.0, 2.0)};
    m.joints.push_back(j);
  }
  return m;
}

inline Eigen::VectorXd random_q(std::mt19937_64& rng, const RobotModel& m) {
  Eigen::VectorXd q(m.joint_count());
  for (int k = 0; k < m.joint_count(); ++k) q[k] = uniform(rng, -M_PI, M_PI);
  return q;
}

/// Total gravitational potential energy of all link masses.
inline double potential_energy(const Eigen::VectorXd& q, const DhSet& rho, const RobotModel& m) {
  const FrameSet f = forward_kinematics(q, rho, m);
  double u = 0.0;
  for (std::size_t k = 0; k < m.joints.size(); ++k)
    u -= m.joints[k].mass * m.gravity.dot(f[k] * m.joints[k].center_of_mass);
  return u;
}

inline Eigen::Isometry3d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
  if (x.norm() < 1e-6) x = Eigen::Vector3d::UnitX();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear().col(0) = x;
  t.linear().col(1) = y;
  t.linear().col(2) = z;
  t.translation() = eye;
  return t;
}

/// World-fixed camera at the origin looking along +x (image x toward -y, image y toward -z).
inline void world_camera(RobotModel& m) {
  m.camera.frame = kWorldFrame;
  m.camera.translation = Eigen::Vector3d::Zero();
  Eigen::Matrix3d r;
  r.col(0) = -Eigen::Vector3d::UnitY();
  r.col(1) = -Eigen::Vector3d::UnitZ();
  r.col(2) = Eigen::Vector3d::UnitX();
  const Eigen::AngleAxisd aa(r);
  m.camera.rotation = aa.angle() * aa.axis();
}

// ---------------------------------------------------------------------------
// Demo scenario: plan, simulate, keep 250 samples per marker, split 500/250.

struct Scenario {
  RobotModel nominal;
  RobotModel truth;
  ParameterSpec spec;
  std::vector<MeasurementSample> samples;
  SampleSplit split;
};

struct ScenarioOptions {
  std::uint64_t seed = 1;
  double sigma_u = 0.0;
  double ripple_amplitude = 0.0;
  std::size_t per_marker = 250;
  std::size_t base_per_marker = 110;
};

inline Scenario make_scenario(const ScenarioOptions& o) {
  Scenario s;
  s.nominal = demo::humanoid();
  s.spec = demo::humanoid_spec(s.nominal);
  PlanOptions po;
  po.base_per_marker = o.base_per_marker;
  const PosePlan plan = plan_poses(s.nominal, {}, VisibilityConstraints{}, o.seed, po);
  PerturbationSpec p = demo::perturbation();
  p.ripple_amplitude = o.ripple_amplitude;
  s.truth = make_ground_truth(s.nominal, s.spec, p, o.seed + 100);
  const SimulationResult sim = simulate_measurements(s.truth, plan.configurations, o.sigma_u, o.seed + 200);
  std::map<std::string, std::size_t> count;
  for (const MeasurementSample& m : sim.samples)
    if (count[m.marker]++ < o.per_marker) s.samples.push_back(m);
  s.split = split_samples(s.samples, 2.0 / 3.0, o.seed);
  return s;
}

inline ParameterSpec unbounded(ParameterSpec spec) {
  for (ParameterEntry& e : spec.entries) e.prior_sigma = std::numeric_limits<double>::infinity();
  return spec;
}

}  // namespace elcal::testing
