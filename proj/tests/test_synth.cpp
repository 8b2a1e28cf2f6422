#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "elcal/demo.hpp"
#include "elcal/synth.hpp"
#include "support.hpp"

using namespace elcal;

namespace {

std::vector<Configuration> demo_plan(std::size_t base, std::uint64_t seed) {
  PlanOptions o;
  o.base_per_marker = base;
  return plan_poses(demo::humanoid(), {}, VisibilityConstraints{}, seed, o).configurations;
}

}  // namespace

TEST(GroundTruth, ZeroSigmasReturnNominal) {
  const RobotModel m = demo::humanoid();
  const ParameterSpec spec = demo::humanoid_spec(m);
  const RobotModel t = make_ground_truth(m, spec, PerturbationSpec::none(), 3);
  EXPECT_EQ(pack(t, spec), pack(m, spec));
  EXPECT_FALSE(t.ripple);
}

TEST(GroundTruth, BitwiseReproducible) {
  const RobotModel m = demo::humanoid();
  const ParameterSpec spec = demo::full_scale_spec(m);
  PerturbationSpec p;
  p.ripple_amplitude = 0.002;
  const RobotModel a = make_ground_truth(m, spec, p, 11);
  const RobotModel b = make_ground_truth(m, spec, p, 11);
  const RobotModel c = make_ground_truth(m, spec, p, 12);
  EXPECT_EQ(pack(a, spec), pack(b, spec));
  EXPECT_EQ(a.ripple->phase, b.ripple->phase);
  EXPECT_NE(pack(a, spec), pack(c, spec));
}

TEST(GroundTruth, OnlyFreeEntriesMove) {
  const RobotModel m = demo::humanoid();
  ParameterSpec spec;
  spec.entries.push_back({"joints/neck_tilt/dh/a", true, std::nullopt, 0.1});
  spec.entries.push_back({"joints/neck_tilt/dh/d", false, std::nullopt, 0.1});
  const RobotModel t = make_ground_truth(m, spec, PerturbationSpec{}, 5);
  EXPECT_NE(t.joints[3].dh.a, m.joints[3].dh.a);
  EXPECT_EQ(t.joints[3].dh.d, m.joints[3].dh.d);
  for (std::size_t k = 0; k < m.joints.size(); ++k)
    if (k != 3) {
      EXPECT_EQ(t.joints[k].dh, m.joints[k].dh);
    }
  EXPECT_EQ(t.intrinsics.focal, m.intrinsics.focal);
}

TEST(GroundTruth, DemoWristErrorIsCentimeterScale) {
  const RobotModel m = demo::humanoid();
  const RobotModel t = make_ground_truth(m, demo::humanoid_spec(m), demo::perturbation(), 1);
  std::mt19937_64 rng(2);
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd q(m.joint_count());
    for (int k = 0; k < m.joint_count(); ++k)
      q[k] = elcal::testing::uniform(rng, m.joints[static_cast<std::size_t>(k)].q_min,
                                     m.joints[static_cast<std::size_t>(k)].q_max);
    for (const char* marker : {"left", "right"}) {
      const Eigen::Vector3d a = marker_world(solve_equilibrium(q, m).frames, m.marker(marker));
      const Eigen::Vector3d b = marker_world(solve_equilibrium(q, t).frames, t.marker(marker));
      sum += (a - b).norm();
      ++n;
    }
  }
  const double mean_mm = 1000.0 * sum / n;
  EXPECT_GT(mean_mm, 20.0);
  EXPECT_LT(mean_mm, 80.0);
}

TEST(GroundTruth, RejectsNegativeSigma) {
  PerturbationSpec p;
  p.marker_sigma = -1.0;
  const RobotModel m = demo::humanoid();
  EXPECT_THROW(make_ground_truth(m, demo::humanoid_spec(m), p, 1), Error);
}

TEST(Simulate, NoiselessMatchesProjection) {
  const RobotModel m = demo::humanoid();
  const RobotModel t = make_ground_truth(m, demo::humanoid_spec(m), demo::perturbation(), 4);
  const std::vector<Configuration> configs = demo_plan(3, 4);
  const SimulationResult r = simulate_measurements(t, configs, 0.0, 9);
  ASSERT_EQ(r.samples.size() + r.skipped.size(), configs.size());
  for (const MeasurementSample& s : r.samples)
    EXPECT_EQ(s.u, predict(t, s.q, t.marker(s.marker)).pixel);
}

TEST(Simulate, NoiseHasRequestedSpread) {
  RobotModel m = elcal::testing::planar_chain({0.1});
  elcal::testing::world_camera(m);
  m.markers.push_back({"m", kWorldFrame, {1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}});
  const std::vector<Configuration> configs(10000, Configuration{Eigen::VectorXd::Zero(1), "m"});
  const SimulationResult r = simulate_measurements(m, configs, 0.5, 3);
  ASSERT_EQ(r.samples.size(), configs.size());
  Eigen::Vector2d mean = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  for (const MeasurementSample& s : r.samples) {
    const Eigen::Vector2d e = s.u - m.intrinsics.center;
    mean += e;
    sq += e.cwiseProduct(e);
  }
  mean /= 10000.0;
  const Eigen::Vector2d sd = (sq / 10000.0 - mean.cwiseProduct(mean)).cwiseSqrt();
  EXPECT_NEAR(sd.x(), 0.5, 0.015);
  EXPECT_NEAR(sd.y(), 0.5, 0.015);
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.02);
}

TEST(Simulate, DeterministicInSeed) {
  const RobotModel m = demo::humanoid();
  const std::vector<Configuration> configs = demo_plan(2, 5);
  const SimulationResult a = simulate_measurements(m, configs, 0.2, 1);
  const SimulationResult b = simulate_measurements(m, configs, 0.2, 1);
  const SimulationResult c = simulate_measurements(m, configs, 0.2, 2);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].u, b.samples[i].u);
    EXPECT_NE(a.samples[i].u, c.samples[i].u);
  }
}

TEST(Simulate, UnobservableConfigurationsAreSkipped) {
  const RobotModel m = demo::humanoid();
  std::vector<Configuration> configs = demo_plan(1, 6);
  Configuration broken = configs.front();
  broken.q = Eigen::VectorXd::Zero(3);
  configs.insert(configs.begin() + 1, broken);
  const SimulationResult r = simulate_measurements(m, configs, 0.0, 1);
  ASSERT_FALSE(r.skipped.empty());
  EXPECT_EQ(r.skipped.front(), 1u);
  EXPECT_THROW(simulate_measurements(m, configs, -1.0, 1), Error);
}

TEST(Simulate, DemoPlanYieldsSevenHundredFifty) {
  const RobotModel m = demo::humanoid();
  const std::vector<Configuration> configs = demo_plan(50, 1);
  std::map<std::string, std::size_t> per;
  for (const Configuration& c : configs) ++per[c.marker];
  ASSERT_EQ(per.size(), 3u);
  for (const auto& [marker, n] : per) {
    EXPECT_GE(n, 50u) << marker;
    EXPECT_LE(n, 250u) << marker;
  }
  const RobotModel t = make_ground_truth(m, demo::humanoid_spec(m), demo::perturbation(), 101);
  const SimulationResult r = simulate_measurements(t, configs, 0.2, 201);
  std::map<std::string, std::size_t> kept;
  for (const MeasurementSample& s : r.samples) ++kept[s.marker];
  EXPECT_EQ(kept.size(), 3u);
  EXPECT_GT(r.samples.size(), configs.size() * 9 / 10);
}

TEST(CartesianReference, MatchesTruthKinematics) {
  const RobotModel m = demo::humanoid();
  const RobotModel t = make_ground_truth(m, demo::humanoid_spec(m), demo::perturbation(), 7);
  const std::vector<Configuration> configs = demo_plan(2, 7);
  const std::vector<Eigen::Vector3d> ref = cartesian_reference(t, configs);
  ASSERT_EQ(ref.size(), configs.size());
  double moved = 0.0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Prediction p = predict(t, configs[i].q, t.marker(configs[i].marker));
    EXPECT_EQ(ref[i], p.marker_world);
    moved += (ref[i] - predict(m, configs[i].q, m.marker(configs[i].marker)).marker_world).norm();
  }
  EXPECT_GT(moved, 0.0);
}
