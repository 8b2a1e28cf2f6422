#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>

#include "elcal/demo.hpp"
#include "elcal/io.hpp"
#include "elcal/synth.hpp"
#include "support.hpp"

using namespace elcal;

namespace {

const char* kMinimal = R"({
  "joints": [
    {"parent": "world", "dh": {"d": 0.1, "theta": 0, "a": 0.2, "alpha": 0}, "limits": [-1, 1]}
  ],
  "camera": {
    "frame": "world", "translation": [0, 0, 0], "rotation": [0, 0, 0],
    "intrinsics": {"focal": [500, 500], "center": [320, 240], "distortion": 0, "image_size": [640, 480]}
  },
  "markers": [{"name": "tip", "frame": 0, "position": [0, 0, 0]}]
})";

std::string expect_parse_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected ParseError";
  return {};
}

}  // namespace

TEST(ModelFile, MinimalDocument) {
  const ModelFile f = load_model_file(kMinimal);
  ASSERT_EQ(f.model.joint_count(), 1);
  EXPECT_EQ(f.model.joints[0].name, "joint_0");
  EXPECT_EQ(f.model.joints[0].parent, kWorldFrame);
  EXPECT_EQ(f.model.joints[0].dh.a, 0.2);
  EXPECT_EQ(f.model.markers[0].normal, Eigen::Vector3d::UnitZ());
  EXPECT_TRUE(f.model.spheres.empty());
  EXPECT_TRUE(f.spec.entries.empty());
}

TEST(ModelFile, ErrorsNameTheField) {
  std::string doc = kMinimal;
  doc.insert(doc.rfind('}'), R"(, "spheres": [{"frame": 0, "center": [0, 0, 0], "radius": -0.1}])");
  EXPECT_NE(expect_parse_error([&] { load_model(doc); }).find("radius"), std::string::npos);

  std::string missing = kMinimal;
  missing.replace(missing.find("\"limits\": [-1, 1]"), 17, "\"limits\": [-1]");
  EXPECT_NE(expect_parse_error([&] { load_model(missing); }).find("model.joints[0].limits"), std::string::npos);

  EXPECT_FALSE(expect_parse_error([] { load_model("{ not json"); }).empty());
  EXPECT_NE(expect_parse_error([] { load_model("{}"); }).find("joints"), std::string::npos);
}

TEST(ModelFile, SpecNeedsExplicitPrior) {
  std::string doc = kMinimal;
  doc.insert(doc.rfind('}'), R"(, "parameter_spec": [{"path": "joints/0/dh/a"}])");
  EXPECT_NE(expect_parse_error([&] { load_model_file(doc); }).find("prior_sigma"), std::string::npos);
  doc = kMinimal;
  doc.insert(doc.rfind('}'), R"(, "parameter_spec": [{"path": "joints/0/dh/a", "prior_sigma": "unbounded"},
                                                    {"path": "joints/0/dh/d", "free": false}])");
  const ModelFile f = load_model_file(doc);
  ASSERT_EQ(f.spec.entries.size(), 2u);
  EXPECT_TRUE(std::isinf(f.spec.entries[0].prior_sigma));
  EXPECT_FALSE(f.spec.entries[1].free);
  doc = kMinimal;
  doc.insert(doc.rfind('}'), R"(, "parameter_spec": [{"path": "joints/3/dh/a", "prior_sigma": 1}])");
  EXPECT_NE(expect_parse_error([&] { load_model_file(doc); }).find("parameter_spec"), std::string::npos);
}

TEST(ModelFile, RoundTripIsLossless) {
  RobotModel m = demo::humanoid();
  const ParameterSpec spec = demo::full_scale_spec(m);
  PerturbationSpec p;
  p.ripple_amplitude = 0.002;
  m = make_ground_truth(m, spec, p, 3);
  const std::string text = save_model(m, spec);
  const ModelFile back = load_model_file(text);
  EXPECT_EQ(save_model(back), text);
  EXPECT_EQ(pack(back.model, spec), pack(m, spec));
  ASSERT_TRUE(back.model.ripple);
  EXPECT_EQ(back.model.ripple->phase, m.ripple->phase);
  for (std::size_t k = 0; k < m.joints.size(); ++k) {
    EXPECT_EQ(back.model.joints[k].dh, m.joints[k].dh);
    EXPECT_EQ(back.model.joints[k].center_of_mass, m.joints[k].center_of_mass);
    EXPECT_EQ(back.model.joints[k].head, m.joints[k].head);
  }
}

TEST(ModelFile, ShippedDemoMatchesBuilder) {
  const ModelFile f = load_model_file(read_file(ELCAL_SOURCE_DIR "/data/demo_humanoid.json"));
  const RobotModel m = demo::humanoid();
  EXPECT_EQ(save_model(f), save_model(m, demo::humanoid_spec(m)));
  EXPECT_EQ(f.model.joint_count(), 19);
  EXPECT_EQ(f.model.markers.size(), 3u);
}

TEST(Samples, RoundTripAndGrouping) {
  std::mt19937_64 rng(1);
  std::vector<MeasurementSample> samples;
  const char* names[] = {"left", "right", "pole"};
  for (int i = 0; i < 750; ++i)
    samples.push_back({Eigen::VectorXd::NullaryExpr(19, [&] { return elcal::testing::uniform(rng, -1, 1); }),
                       names[i % 3],
                       {elcal::testing::uniform(rng, 0, 640), elcal::testing::uniform(rng, 0, 480)}});
  const std::vector<MeasurementSample> back = load_samples(save_samples(samples));
  ASSERT_EQ(back.size(), 750u);
  std::map<std::string, int> per;
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].q, samples[i].q);
    EXPECT_EQ(back[i].u, samples[i].u);
    ++per[back[i].marker];
  }
  EXPECT_EQ(per, (std::map<std::string, int>{{"left", 250}, {"pole", 250}, {"right", 250}}));
}

TEST(Samples, ErrorsCarryLineNumber) {
  const std::string text =
      "{\"q\": [0.1], \"marker\": \"m\", \"u\": [1, 2]}\n"
      "\n"
      "{\"q\": [0.1], \"marker\": \"m\", \"u\": [1]}\n";
  EXPECT_NE(expect_parse_error([&] { load_samples(text); }).find("line 3"), std::string::npos);
  EXPECT_NE(expect_parse_error([] { load_samples("{\"q\": [0.1], \"marker\": \"m\",\n"); }).find("line 1"),
            std::string::npos);
  EXPECT_TRUE(load_samples("").empty());
}

TEST(Samples, CheckedAgainstModel) {
  const RobotModel m = load_model(kMinimal);
  std::vector<MeasurementSample> s{{Eigen::VectorXd::Constant(1, 0.5), "tip", {10, 10}},
                                   {Eigen::VectorXd::Constant(1, 2.0), "tip", {10, 10}}};
  EXPECT_EQ(check_samples(s, m), std::vector<std::size_t>{1});
  s[0].marker = "nose";
  EXPECT_NE(expect_parse_error([&] { check_samples(s, m); }).find("sample 0"), std::string::npos);
  s[0].marker = "tip";
  s[1].u = {700, 10};
  EXPECT_NE(expect_parse_error([&] { check_samples(s, m); }).find("sample 1"), std::string::npos);
}

TEST(Configurations, RoundTrip) {
  const std::vector<Configuration> c{{Eigen::Vector3d(0.1, -0.2, 1.0 / 3.0), "left"}, {Eigen::Vector3d::Zero(), "pole"}};
  const std::vector<Configuration> back = load_configurations(save_configurations(c));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].q, c[0].q);
  EXPECT_EQ(back[1].marker, "pole");
}
