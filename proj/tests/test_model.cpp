#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "elcal/demo.hpp"
#include "elcal/model.hpp"
#include "support.hpp"

using namespace elcal;

namespace {

ParameterSpec all_dh(const RobotModel& m) {
  ParameterSpec spec;
  for (const Joint& j : m.joints)
    for (const char* c : {"d", "theta", "a", "alpha"}) spec.entries.push_back({"joints/" + j.name + "/dh/" + c});
  return spec;
}

}  // namespace

TEST(ParameterPath, ParsesEveryKind) {
  const RobotModel m = demo::humanoid();
  const ParameterPath a = parse_path("joints/3/dh/alpha", m);
  EXPECT_EQ(a.kind, ParameterKind::joint_dh);
  EXPECT_EQ(a.index, 3);
  EXPECT_EQ(a.component, static_cast<int>(DhComponent::alpha));
  EXPECT_EQ(parse_path("joints/neck_tilt/dh/alpha", m), a);
  EXPECT_EQ(parse_path("joints/left_elbow/elasticity/theta", m).kind, ParameterKind::joint_elasticity);
  EXPECT_EQ(parse_path("camera/mount/rz", m).component, 5);
  EXPECT_EQ(parse_path("camera/intrinsics/xi", m).component, 4);
  const ParameterPath mk = parse_path("markers/right/y", m);
  EXPECT_EQ(mk.kind, ParameterKind::marker_position);
  EXPECT_EQ(mk.index, 1);
  EXPECT_EQ(mk.component, 1);
}

TEST(ParameterPath, RejectsMalformed) {
  const RobotModel m = demo::humanoid();
  for (const char* bad : {"joints/99/dh/d", "joints/nope/dh/d", "joints/0/dh/beta", "joints/0/mass", "camera/mount/tw",
                          "camera/intrinsics/k1", "markers/ghost/x", "markers/left/w", "", "gravity/z"})
    EXPECT_THROW(parse_path(bad, m), Error) << bad;
}

TEST(Pack, EmptySpecGivesEmptyVector) {
  EXPECT_EQ(pack(demo::humanoid(), ParameterSpec{}).size(), 0);
}

TEST(Pack, AllDhOfSevenJointChainHas28Entries) {
  const RobotModel m = elcal::testing::planar_chain({1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(pack(m, all_dh(m)).size(), 28);
}

TEST(Pack, FullScaleHumanoidSpecHas129Entries) {
  const RobotModel m = demo::humanoid();
  EXPECT_EQ(pack(m, demo::full_scale_spec(m)).size(), 129);
  EXPECT_EQ(demo::full_scale_spec(m).free_count(), 129u);
}

TEST(Pack, FixedEntriesAreSkipped) {
  const RobotModel m = elcal::testing::planar_chain({1, 2});
  ParameterSpec spec = all_dh(m);
  spec.entries[1].free = false;
  const ParameterVector theta = pack(m, spec);
  ASSERT_EQ(theta.size(), 7);
  EXPECT_EQ(theta[1], 1.0);  // j0 a
  EXPECT_EQ(theta[5], 2.0);  // j1 a
}

TEST(Unpack, RoundTripIsIdentity) {
  const RobotModel m = demo::humanoid();
  const ParameterSpec spec = demo::full_scale_spec(m);
  const RobotModel back = unpack(pack(m, spec), m, spec);
  EXPECT_EQ(pack(back, spec), pack(m, spec));
  for (std::size_t k = 0; k < m.joints.size(); ++k) {
    EXPECT_EQ(back.joints[k].dh, m.joints[k].dh);
    EXPECT_EQ(back.joints[k].elasticity, m.joints[k].elasticity);
  }
  EXPECT_EQ(back.camera.rotation, m.camera.rotation);
  EXPECT_EQ(back.intrinsics.focal, m.intrinsics.focal);
}

TEST(Unpack, WritesAbsoluteValue) {
  RobotModel m = elcal::testing::planar_chain({1, 1});
  m.joints[1].dh.d = 0.5;
  ParameterSpec spec;
  spec.entries.push_back({"joints/1/dh/d"});
  ParameterVector theta(1);
  theta << 0.01;
  const RobotModel out = unpack(theta, m, spec);
  EXPECT_EQ(out.joints[1].dh.d, 0.01);
  EXPECT_EQ(out.joints[0].dh, m.joints[0].dh);
  EXPECT_EQ(out.joints[1].dh.a, 1.0);
}

TEST(Unpack, RejectsNanAndWrongLength) {
  const RobotModel m = elcal::testing::planar_chain({1, 1});
  ParameterSpec spec;
  spec.entries.push_back({"joints/1/dh/d"});
  ParameterVector theta(1);
  theta << std::nan("");
  EXPECT_THROW(unpack(theta, m, spec), Error);
  EXPECT_THROW(unpack(ParameterVector::Zero(2), m, spec), Error);
}

TEST(Resolve, DuplicatePathsAreRejectedInAnySpelling) {
  const RobotModel m = demo::humanoid();
  std::mt19937_64 rng(7);
  const ParameterSpec full = demo::full_scale_spec(m);
  for (int trial = 0; trial < 200; ++trial) {
    ParameterSpec spec = full;
    const auto i = std::uniform_int_distribution<std::size_t>(0, spec.entries.size() - 1)(rng);
    ParameterEntry dup = spec.entries[i];
    const ParameterPath p = parse_path(dup.path, m);
    if (p.kind == ParameterKind::joint_dh || p.kind == ParameterKind::joint_elasticity) {
      // Same joint addressed by index instead of name.
      const std::string rest = dup.path.substr(dup.path.find('/', 7));
      dup.path = "joints/" + std::to_string(p.index) + rest;
    }
    dup.free = trial % 2 == 0;
    const auto at = std::uniform_int_distribution<std::size_t>(0, spec.entries.size())(rng);
    spec.entries.insert(spec.entries.begin() + static_cast<std::ptrdiff_t>(at), dup);
    EXPECT_THROW(resolve(spec, m), Error) << dup.path;
  }
}

TEST(Resolve, PriorDefaultsToModelValue) {
  const RobotModel m = demo::humanoid();
  ParameterSpec spec;
  spec.entries.push_back({"camera/intrinsics/fx", true, std::nullopt, 50.0});
  spec.entries.push_back({"camera/intrinsics/fy", true, 400.0, 50.0});
  const ResolvedSpec r = resolve(spec, m);
  EXPECT_EQ(r.prior_mean[0], 520.0);
  EXPECT_EQ(r.prior_mean[1], 400.0);
  spec.entries[0].prior_sigma = 0.0;
  EXPECT_THROW(resolve(spec, m), Error);
}

TEST(Validate, CatchesBrokenModels) {
  EXPECT_NO_THROW(validate(demo::humanoid()));
  RobotModel m = demo::humanoid();
  m.spheres[0].radius = -0.1;
  EXPECT_THROW(validate(m), Error);
  m = demo::humanoid();
  m.joints[3].parent = 5;
  EXPECT_THROW(validate(m), Error);
  m = demo::humanoid();
  m.joints[0].q_min = 1.0;
  m.joints[0].q_max = 0.0;
  EXPECT_THROW(validate(m), Error);
  m = demo::humanoid();
  m.markers[1].name = m.markers[0].name;
  EXPECT_THROW(validate(m), Error);
  m = demo::humanoid();
  m.intrinsics.focal.x() = 0.0;
  EXPECT_THROW(validate(m), Error);
}

TEST(Validate, ZeroWidthLimitsLockAJoint) {
  RobotModel m = demo::humanoid();
  m.joints[4].q_min = m.joints[4].q_max = 0.0;
  EXPECT_NO_THROW(validate(m));
}

TEST(DemoSpec, IsIdentifiableSubsetOfFullScale) {
  const RobotModel m = demo::humanoid();
  const ParameterSpec spec = demo::humanoid_spec(m);
  EXPECT_EQ(spec.free_count(), 88u);
  for (const ParameterEntry& e : spec.entries) {
    EXPECT_TRUE(std::isfinite(e.prior_sigma)) << e.path;
    EXPECT_NE(e.path.rfind("markers/pole", 0), 0u) << "pole is a surveyed reference";
  }
}
