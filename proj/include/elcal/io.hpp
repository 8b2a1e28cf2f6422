#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "elcal/error.hpp"
#include "elcal/model.hpp"

namespace elcal {

using json = nlohmann::json;

/// A model document: the robot plus the calibration parameter spec it ships with.
struct ModelFile {
  RobotModel model;
  ParameterSpec spec;
};

namespace io_detail {

/// Field lookup that reports the JSON location on failure.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& why) const { throw ParseError(where_ + ": " + why); }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Reader at(const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) fail(std::string("missing field '") + key + "'");
    return Reader(j_.at(key), where_ + "." + key);
  }

  Reader at(std::size_t i) const { return Reader(j_.at(i), where_ + "[" + std::to_string(i) + "]"); }

  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  int integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<int>();
  }

  /// Joint index, or "world" / -1 for the fixed world frame.
  int frame() const {
    if (j_.is_string() && j_.get<std::string>() == "world") return kWorldFrame;
    return integer();
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vec() const {
    if (size() != N) fail("expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = at(static_cast<std::size_t>(i)).number();
    return v;
  }

  Eigen::VectorXd dynamic_vec() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) v[static_cast<Eigen::Index>(i)] = at(i).number();
    return v;
  }

  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string where_;
};

inline DhParams read_dh(const Reader& r) {
  return {r.at("d").number(), r.at("theta").number(), r.at("a").number(), r.at("alpha").number()};
}

inline json write_dh(const DhParams& p) { return {{"d", p.d}, {"theta", p.theta}, {"a", p.a}, {"alpha", p.alpha}}; }

template <typename V>
json write_vec(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json write_frame(int f) { return f == kWorldFrame ? json("world") : json(f); }

inline json parse_document(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

}  // namespace io_detail

inline ModelFile model_file_from_json(const json& doc) {
  using io_detail::Reader;
  const Reader root(doc, "model");
  ModelFile out;
  RobotModel& m = out.model;
  const Reader joints = root.at("joints");
  for (std::size_t k = 0; k < joints.size(); ++k) {
    const Reader jr = joints.at(k);
    Joint j;
    j.name = jr.has("name") ? jr.at("name").string() : "joint_" + std::to_string(k);
    j.parent = jr.at("parent").frame();
    j.dh = io_detail::read_dh(jr.at("dh"));
    if (jr.has("elasticity")) j.elasticity = io_detail::read_dh(jr.at("elasticity"));
    const Eigen::Vector2d limits = jr.at("limits").vec<2>();
    j.q_min = limits[0];
    j.q_max = limits[1];
    j.mass = jr.has("mass") ? jr.at("mass").number() : 0.0;
    if (jr.has("center_of_mass")) j.center_of_mass = jr.at("center_of_mass").vec<3>();
    if (jr.has("head")) j.head = jr.at("head").boolean();
    m.joints.push_back(std::move(j));
  }
  const Reader cam = root.at("camera");
  m.camera.frame = cam.at("frame").frame();
  m.camera.translation = cam.at("translation").vec<3>();
  m.camera.rotation = cam.at("rotation").vec<3>();
  const Reader intr = cam.at("intrinsics");
  m.intrinsics.focal = intr.at("focal").vec<2>();
  m.intrinsics.center = intr.at("center").vec<2>();
  m.intrinsics.distortion = intr.at("distortion").number();
  m.intrinsics.image_size = intr.at("image_size").vec<2>();
  const Reader markers = root.at("markers");
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const Reader mr = markers.at(i);
    MarkerMount mk;
    mk.name = mr.at("name").string();
    mk.frame = mr.at("frame").frame();
    mk.position = mr.at("position").vec<3>();
    if (mr.has("normal")) mk.normal = mr.at("normal").vec<3>();
    m.markers.push_back(std::move(mk));
  }
  if (root.has("spheres")) {
    const Reader spheres = root.at("spheres");
    for (std::size_t i = 0; i < spheres.size(); ++i) {
      const Reader sr = spheres.at(i);
      m.spheres.push_back({sr.at("frame").frame(), sr.at("center").vec<3>(), sr.at("radius").number()});
    }
  }
  if (root.has("gravity")) m.gravity = root.at("gravity").vec<3>();
  if (root.has("ripple")) {
    const Reader rr = root.at("ripple");
    JointRipple ripple;
    ripple.amplitude = rr.at("amplitude").number();
    ripple.period = rr.at("period").number();
    const Eigen::VectorXd phase = rr.at("phase").dynamic_vec();
    ripple.phase.assign(phase.data(), phase.data() + phase.size());
    m.ripple = std::move(ripple);
  }
  try {
    validate(m);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("model.") + e.what());
  }
  if (root.has("parameter_spec")) {
    const Reader ps = root.at("parameter_spec");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const Reader er = ps.at(i);
      ParameterEntry e;
      e.path = er.at("path").string();
      e.free = er.has("free") ? er.at("free").boolean() : true;
      if (er.has("prior_mean") && !er.at("prior_mean").raw().is_null()) e.prior_mean = er.at("prior_mean").number();
      if (er.has("prior_sigma")) {
        const Reader s = er.at("prior_sigma");
        if (s.raw().is_string()) {
          if (s.string() != "unbounded") s.fail("expected a number or \"unbounded\"");
        } else {
          e.prior_sigma = s.number();
          if (!(e.prior_sigma > 0.0)) s.fail("must be > 0");
        }
      } else if (e.free) {
        er.fail("free entry needs prior_sigma (a number or \"unbounded\")");
      }
      out.spec.entries.push_back(std::move(e));
    }
    try {
      resolve(out.spec, m);
    } catch (const Error& e) {
      throw ParseError(std::string("model.parameter_spec: ") + e.what());
    }
  }
  return out;
}

inline json to_json(const RobotModel& m, const ParameterSpec* spec = nullptr) {
  using io_detail::write_dh;
  using io_detail::write_frame;
  using io_detail::write_vec;
  json doc;
  json joints = json::array();
  for (const Joint& j : m.joints) {
    joints.push_back({{"name", j.name},
                      {"parent", write_frame(j.parent)},
                      {"dh", write_dh(j.dh)},
                      {"elasticity", write_dh(j.elasticity)},
                      {"limits", {j.q_min, j.q_max}},
                      {"mass", j.mass},
                      {"center_of_mass", write_vec(j.center_of_mass)},
                      {"head", j.head}});
  }
  doc["joints"] = std::move(joints);
  doc["camera"] = {{"frame", write_frame(m.camera.frame)},
                   {"translation", write_vec(m.camera.translation)},
                   {"rotation", write_vec(m.camera.rotation)},
                   {"intrinsics",
                    {{"focal", write_vec(m.intrinsics.focal)},
                     {"center", write_vec(m.intrinsics.center)},
                     {"distortion", m.intrinsics.distortion},
                     {"image_size", write_vec(m.intrinsics.image_size)}}}};
  json markers = json::array();
  for (const MarkerMount& mk : m.markers)
    markers.push_back({{"name", mk.name},
                       {"frame", write_frame(mk.frame)},
                       {"position", write_vec(mk.position)},
                       {"normal", write_vec(mk.normal)}});
  doc["markers"] = std::move(markers);
  json spheres = json::array();
  for (const Sphere& s : m.spheres)
    spheres.push_back({{"frame", write_frame(s.frame)}, {"center", write_vec(s.center)}, {"radius", s.radius}});
  doc["spheres"] = std::move(spheres);
  doc["gravity"] = write_vec(m.gravity);
  if (m.ripple)
    doc["ripple"] = {{"amplitude", m.ripple->amplitude}, {"period", m.ripple->period}, {"phase", m.ripple->phase}};
  json ps = json::array();
  if (spec) {
    for (const ParameterEntry& e : spec->entries) {
      json entry = {{"path", e.path}, {"free", e.free}};
      if (e.prior_mean) entry["prior_mean"] = *e.prior_mean;
      entry["prior_sigma"] = std::isfinite(e.prior_sigma) ? json(e.prior_sigma) : json("unbounded");
      ps.push_back(std::move(entry));
    }
  }
  doc["parameter_spec"] = std::move(ps);
  return doc;
}

inline ModelFile load_model_file(const std::string& text) {
  return model_file_from_json(io_detail::parse_document(text, "model"));
}

inline RobotModel load_model(const std::string& text) { return load_model_file(text).model; }

inline std::string save_model(const RobotModel& m, const ParameterSpec& spec) { return to_json(m, &spec).dump(2) + "\n"; }

inline std::string save_model(const ModelFile& f) { return save_model(f.model, f.spec); }

// ---------------------------------------------------------------------------
// Line-oriented files: one JSON object per line.

namespace io_detail {

template <typename Fn>
void for_each_line(const std::string& text, const std::string& what, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = what + " line " + std::to_string(number);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    fn(Reader(j, where));
  }
}

}  // namespace io_detail

inline std::vector<MeasurementSample> load_samples(const std::string& text) {
  std::vector<MeasurementSample> out;
  io_detail::for_each_line(text, "samples", [&](const io_detail::Reader& r) {
    out.push_back({r.at("q").dynamic_vec(), r.at("marker").string(), r.at("u").vec<2>()});
  });
  return out;
}

inline std::string save_samples(const std::vector<MeasurementSample>& samples) {
  std::string out;
  for (const auto& s : samples)
    out += json{{"q", io_detail::write_vec(s.q)}, {"marker", s.marker}, {"u", io_detail::write_vec(s.u)}}.dump() + "\n";
  return out;
}

inline std::vector<Configuration> load_configurations(const std::string& text) {
  std::vector<Configuration> out;
  io_detail::for_each_line(text, "configurations", [&](const io_detail::Reader& r) {
    out.push_back({r.at("q").dynamic_vec(), r.at("marker").string()});
  });
  return out;
}

inline std::string save_configurations(const std::vector<Configuration>& configs) {
  std::string out;
  for (const auto& c : configs) out += json{{"q", io_detail::write_vec(c.q)}, {"marker", c.marker}}.dump() + "\n";
  return out;
}

/// Checks that samples fit the model: known markers, matching joint counts, pixels inside
/// the image. Returns the indices of samples whose q lies outside the joint limits.
inline std::vector<std::size_t> check_samples(const std::vector<MeasurementSample>& samples, const RobotModel& m) {
  std::vector<std::size_t> outside_limits;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const MeasurementSample& s = samples[i];
    const std::string where = "sample " + std::to_string(i) + ": ";
    if (m.marker_index(s.marker) < 0) throw ParseError(where + "unknown marker '" + s.marker + "'");
    if (s.q.size() != m.joint_count()) throw ParseError(where + "joint vector length does not match the model");
    if (!s.u.allFinite() || s.u.x() < 0.0 || s.u.y() < 0.0 || s.u.x() > m.intrinsics.image_size.x() ||
        s.u.y() > m.intrinsics.image_size.y())
      throw ParseError(where + "pixel coordinates outside the image");
    if (!within_limits(m, s.q)) outside_limits.push_back(i);
  }
  return outside_limits;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("error while writing '" + path + "'");
}

}  // namespace elcal
