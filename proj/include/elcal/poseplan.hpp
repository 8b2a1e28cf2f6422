#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elcal/camera.hpp"
#include "elcal/error.hpp"
#include "elcal/kinematics.hpp"
#include "elcal/model.hpp"
#include "elcal/parallel.hpp"
#include "elcal/rng.hpp"

namespace elcal {

struct VisibilityConstraints {
  /// Keep the marker this far inside the image border (px).
  double fov_margin = 40.0;
  /// Minimum cosine between the marker normal and the marker-to-camera direction.
  double facing_min_cos = 0.5;
  double min_depth = 0.2;
  double max_depth = 1.5;
  /// Added to every sphere radius to absorb pre-calibration uncertainty (m).
  double occlusion_clearance = 0.02;
  /// Reject configurations in which any other marker is visible too.
  bool require_exclusive = true;
  /// Spheres on the marker's (or camera's) own frame whose inflated surface is within this
  /// distance of the marker point (camera center) are the mounting body and do not occlude.
  double mount_exclusion_radius = 0.03;
  /// Head sweep corner targets are pulled from the inner image corners toward the image
  /// center by this fraction.
  double sweep_inset = 0.25;

  void validate() const {
    if (!(min_depth > 0.0 && min_depth < max_depth)) throw Error("constraints: need 0 < min_depth < max_depth");
    if (!(facing_min_cos >= -1.0 && facing_min_cos <= 1.0)) throw Error("constraints: facing_min_cos outside [-1, 1]");
    if (!(fov_margin >= 0.0) || !(occlusion_clearance >= 0.0) || !(mount_exclusion_radius >= 0.0))
      throw Error("constraints: margins must be >= 0");
    if (!(sweep_inset >= 0.0 && sweep_inset < 1.0)) throw Error("constraints: sweep_inset must be in [0, 1)");
  }
};

/// Rejection reasons, in the order they are evaluated.
enum class Visibility { visible, no_equilibrium, field_of_view, depth, facing, occlusion, exclusivity };

inline std::string to_string(Visibility v) {
  switch (v) {
    case Visibility::visible: return "visible";
    case Visibility::no_equilibrium: return "no_equilibrium";
    case Visibility::field_of_view: return "field_of_view";
    case Visibility::depth: return "depth";
    case Visibility::facing: return "facing";
    case Visibility::occlusion: return "occlusion";
    case Visibility::exclusivity: return "exclusivity";
  }
  return "unknown";
}

struct VisibilityResult {
  Visibility verdict = Visibility::visible;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;

  bool accepted() const { return verdict == Visibility::visible; }
};

/// Distance from `p` to the segment [a, b].
inline double segment_point_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& p) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

inline bool segment_hits_sphere(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& center,
                                double radius) {
  return segment_point_distance(a, b, center) < radius;
}

namespace detail {

struct MarkerView {
  bool in_view = false;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
};

inline MarkerView view_marker(const Eigen::Vector3d& x, const Eigen::Isometry3d& camera, const CameraIntrinsics& intr,
                              double margin) {
  MarkerView v;
  v.depth = to_camera_frame(x, camera).z();
  if (!(v.depth > kMinDepth)) return v;
  v.pixel = project(x, camera, intr);
  v.in_view = v.pixel.x() >= margin && v.pixel.y() >= margin && v.pixel.x() <= intr.image_size.x() - margin &&
              v.pixel.y() <= intr.image_size.y() - margin;
  return v;
}

inline bool occluded(const FrameSet& frames, const RobotModel& m, const Eigen::Vector3d& camera_center,
                     const MarkerMount& marker, const Eigen::Vector3d& marker_point, const VisibilityConstraints& c) {
  for (const Sphere& s : m.spheres) {
    const Eigen::Vector3d center = frames.at(s.frame) * s.center;
    const double r = s.radius + c.occlusion_clearance;
    if (s.frame == marker.frame && (center - marker_point).norm() <= r + c.mount_exclusion_radius) continue;
    if (s.frame == m.camera.frame && (center - camera_center).norm() <= r + c.mount_exclusion_radius) continue;
    if (segment_hits_sphere(camera_center, marker_point, center, r)) return true;
  }
  return false;
}

}  // namespace detail

/// Decides whether `marker_id` can be measured in configuration q. The first failing test
/// in the order field of view, depth, facing, occlusion, exclusivity is reported.
inline VisibilityResult check_visibility(const Eigen::VectorXd& q, const std::string& marker_id, const RobotModel& m,
                                         const VisibilityConstraints& c) {
  VisibilityResult out;
  Equilibrium eq;
  try {
    eq = solve_equilibrium(q, m);
  } catch (const EquilibriumError&) {
    out.verdict = Visibility::no_equilibrium;
    return out;
  }
  const MarkerMount& marker = m.marker(marker_id);
  const Eigen::Isometry3d cam = camera_pose(eq.frames, m.camera);
  const Eigen::Vector3d x = marker_world(eq.frames, marker);
  const detail::MarkerView view = detail::view_marker(x, cam, m.intrinsics, c.fov_margin);
  out.pixel = view.pixel;
  out.depth = view.depth;
  if (!view.in_view) {
    out.verdict = Visibility::field_of_view;
    return out;
  }
  if (view.depth < c.min_depth || view.depth > c.max_depth) {
    out.verdict = Visibility::depth;
    return out;
  }
  const Eigen::Vector3d normal = (eq.frames.at(marker.frame).linear() * marker.normal).normalized();
  const Eigen::Vector3d to_camera = (cam.translation() - x).normalized();
  if (normal.dot(to_camera) < c.facing_min_cos) {
    out.verdict = Visibility::facing;
    return out;
  }
  if (detail::occluded(eq.frames, m, cam.translation(), marker, x, c)) {
    out.verdict = Visibility::occlusion;
    return out;
  }
  if (c.require_exclusive) {
    for (const MarkerMount& other : m.markers) {
      if (other.name == marker.name) continue;
      const Eigen::Vector3d y = marker_world(eq.frames, other);
      if (!detail::view_marker(y, cam, m.intrinsics, c.fov_margin).in_view) continue;
      if (detail::occluded(eq.frames, m, cam.translation(), other, y, c)) continue;
      out.verdict = Visibility::exclusivity;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SamplingOptions {
  std::uint64_t max_attempts = 10'000'000;
  std::size_t batch_size = 4096;
  unsigned threads = 0;
};

struct SamplingResult {
  std::vector<Eigen::VectorXd> configurations;
  std::uint64_t attempts = 0;
  bool complete = false;

  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(configurations.size()) / static_cast<double>(attempts);
  }
};

inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Draw number `counter` of the configuration stream `seed`: uniform within the joint limits.
inline Eigen::VectorXd draw_configuration(const RobotModel& m, std::uint64_t seed, std::uint64_t counter) {
  std::mt19937_64 rng = stream_rng(seed, counter);
  Eigen::VectorXd q(m.joint_count());
  for (int k = 0; k < m.joint_count(); ++k) {
    const Joint& j = m.joints[static_cast<std::size_t>(k)];
    q[k] = j.q_min + unit_uniform(rng) * (j.q_max - j.q_min);
  }
  return q;
}

/// Rejection sampling: keeps uniform draws that pass check_visibility, in draw order, until
/// n_target are accepted or the attempt cap is reached.
inline SamplingResult sample_configurations(const RobotModel& m, const std::string& marker_id,
                                            const VisibilityConstraints& c, std::size_t n_target, std::uint64_t seed,
                                            const SamplingOptions& opts = {}) {
  if (n_target < 1) throw Error("sample_configurations: n_target must be >= 1");
  c.validate();
  m.marker(marker_id);
  SamplingResult out;
  std::vector<char> accepted;
  while (out.configurations.size() < n_target && out.attempts < opts.max_attempts) {
    const auto batch = static_cast<std::size_t>(
        std::min<std::uint64_t>(std::max<std::size_t>(opts.batch_size, 1), opts.max_attempts - out.attempts));
    accepted.assign(batch, 0);
    const std::uint64_t first = out.attempts;
    parallel_for(batch, opts.threads, [&](std::size_t i) {
      accepted[i] = check_visibility(draw_configuration(m, seed, first + i), marker_id, m, c).accepted() ? 1 : 0;
    });
    for (std::size_t i = 0; i < batch; ++i) {
      ++out.attempts;
      if (!accepted[i]) continue;
      out.configurations.push_back(draw_configuration(m, seed, first + i));
      if (out.configurations.size() == n_target) break;
    }
  }
  out.complete = out.configurations.size() == n_target;
  return out;
}

// ---------------------------------------------------------------------------

/// Damped Newton on the two head joints so that the marker projects onto `target`.
/// Returns the adjusted configuration if the residual drops below `tolerance_px`.
inline std::optional<Eigen::VectorXd> aim_head(const Eigen::VectorXd& q_start, const std::string& marker_id,
                                               const RobotModel& m, const Eigen::Vector2d& target,
                                               double tolerance_px = 0.5, int max_iterations = 50) {
  const std::vector<int> head = m.head_joints();
  if (head.size() != 2) return std::nullopt;
  const MarkerMount& marker = m.marker(marker_id);
  auto pixel_at = [&](const Eigen::VectorXd& q) -> std::optional<Eigen::Vector2d> {
    try {
      const Equilibrium eq = solve_equilibrium(q, m);
      return project(marker_world(eq.frames, marker), camera_pose(eq.frames, m.camera), m.intrinsics);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  auto clamp = [&](Eigen::VectorXd& q) {
    for (int k : head) {
      const Joint& j = m.joints[static_cast<std::size_t>(k)];
      q[k] = std::clamp(q[k], j.q_min, j.q_max);
    }
  };
  Eigen::VectorXd q = q_start;
  clamp(q);
  std::optional<Eigen::Vector2d> u = pixel_at(q);
  if (!u) return std::nullopt;
  double err = (*u - target).norm();
  for (int it = 0; it < max_iterations && err >= tolerance_px; ++it) {
    Eigen::Matrix2d jac;
    for (int c = 0; c < 2; ++c) {
      const double h = 1e-6;
      Eigen::VectorXd qp = q, qm = q;
      qp[head[static_cast<std::size_t>(c)]] += h;
      qm[head[static_cast<std::size_t>(c)]] -= h;
      const auto up = pixel_at(qp), um = pixel_at(qm);
      if (!up || !um) return std::nullopt;
      jac.col(c) = (*up - *um) / (2.0 * h);
    }
    const Eigen::Vector2d e = *u - target;
    double mu = 1e-9 * std::max(1.0, jac.squaredNorm());
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      const Eigen::Matrix2d a = jac.transpose() * jac + mu * Eigen::Matrix2d::Identity();
      const Eigen::Vector2d step = -a.ldlt().solve(jac.transpose() * e);
      Eigen::VectorXd qn = q;
      qn[head[0]] += step[0];
      qn[head[1]] += step[1];
      clamp(qn);
      const auto un = pixel_at(qn);
      if (un && (*un - target).norm() < err) {
        q = qn;
        u = un;
        err = (*un - target).norm();
        improved = true;
      } else {
        mu = mu * 10.0 + 1e-6 * jac.squaredNorm();
      }
    }
    if (!improved) break;
  }
  if (err >= tolerance_px) return std::nullopt;
  return q;
}

/// Targets for the head sweep: inner image corners pulled toward the center.
inline std::vector<Eigen::Vector2d> sweep_targets(const CameraIntrinsics& intr, const VisibilityConstraints& c) {
  const Eigen::Vector2d center = 0.5 * intr.image_size;
  const double m = c.fov_margin;
  const double w = intr.image_size.x(), h = intr.image_size.y();
  std::vector<Eigen::Vector2d> out;
  for (const Eigen::Vector2d& corner : {Eigen::Vector2d(m, m), Eigen::Vector2d(w - m, m), Eigen::Vector2d(m, h - m),
                                       Eigen::Vector2d(w - m, h - m)})
    out.push_back(corner + c.sweep_inset * (center - corner));
  return out;
}

/// The base configuration followed by every corner configuration that converges and stays visible.
inline std::vector<Eigen::VectorXd> head_sweep(const Eigen::VectorXd& q_base, const std::string& marker_id,
                                               const RobotModel& m, const VisibilityConstraints& c) {
  std::vector<Eigen::VectorXd> out{q_base};
  for (const Eigen::Vector2d& target : sweep_targets(m.intrinsics, c)) {
    const auto q = aim_head(q_base, marker_id, m, target);
    if (q && check_visibility(*q, marker_id, m, c).accepted()) out.push_back(*q);
  }
  return out;
}

// ---------------------------------------------------------------------------

/// max_k w_k |a_k - b_k|
inline double weighted_linf(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& weights) {
  return (a - b).cwiseAbs().cwiseProduct(weights).maxCoeff();
}

inline double tour_length(const std::vector<Eigen::VectorXd>& configs, const std::vector<std::size_t>& order,
                          const Eigen::VectorXd& weights) {
  double len = 0.0;
  for (std::size_t i = 1; i < order.size(); ++i) len += weighted_linf(configs[order[i - 1]], configs[order[i]], weights);
  return len;
}

namespace detail {

using DistanceMatrix = std::vector<std::vector<double>>;

inline double path_length(const DistanceMatrix& d, const std::vector<std::size_t>& p) {
  double len = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) len += d[p[i - 1]][p[i]];
  return len;
}

/// Exact shortest open path (free endpoints) by dynamic programming over subsets.
inline std::vector<std::size_t> held_karp_path(const DistanceMatrix& d) {
  const std::size_t n = d.size();
  const std::size_t full = (std::size_t{1} << n) - 1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(full + 1, std::vector<double>(n, inf));
  std::vector<std::vector<int>> prev(full + 1, std::vector<int>(n, -1));
  for (std::size_t i = 0; i < n; ++i) cost[std::size_t{1} << i][i] = 0.0;
  for (std::size_t mask = 1; mask <= full; ++mask)
    for (std::size_t last = 0; last < n; ++last) {
      if (!(mask & (std::size_t{1} << last)) || cost[mask][last] == inf) continue;
      for (std::size_t next = 0; next < n; ++next) {
        if (mask & (std::size_t{1} << next)) continue;
        const std::size_t nm = mask | (std::size_t{1} << next);
        const double c = cost[mask][last] + d[last][next];
        if (c < cost[nm][next]) {
          cost[nm][next] = c;
          prev[nm][next] = static_cast<int>(last);
        }
      }
    }
  std::size_t last = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (cost[full][i] < cost[full][last]) last = i;
  std::vector<std::size_t> path;
  std::size_t mask = full;
  int cur = static_cast<int>(last);
  while (cur >= 0) {
    path.push_back(static_cast<std::size_t>(cur));
    const int p = prev[mask][static_cast<std::size_t>(cur)];
    mask &= ~(std::size_t{1} << static_cast<std::size_t>(cur));
    cur = p;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

inline std::vector<std::size_t> nearest_neighbor_path(const DistanceMatrix& d, std::size_t start) {
  const std::size_t n = d.size();
  std::vector<char> used(n, 0);
  std::vector<std::size_t> path{start};
  used[start] = 1;
  while (path.size() < n) {
    const std::size_t cur = path.back();
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j)
      if (!used[j] && (best == n || d[cur][j] < d[cur][best])) best = j;
    used[best] = 1;
    path.push_back(best);
  }
  return path;
}

/// Segment reversals of an open path until no reversal shortens it.
inline void two_opt(const DistanceMatrix& d, std::vector<std::size_t>& p) {
  const std::size_t n = p.size();
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double before = 0.0, after = 0.0;
        if (i > 0) {
          before += d[p[i - 1]][p[i]];
          after += d[p[i - 1]][p[j]];
        }
        if (j + 1 < n) {
          before += d[p[j]][p[j + 1]];
          after += d[p[i]][p[j + 1]];
        }
        if (after < before - 1e-12) {
          std::reverse(p.begin() + static_cast<std::ptrdiff_t>(i), p.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          improved = true;
        }
      }
  }
}

}  // namespace detail

/// Visiting order of the configurations (open path) with a short total weighted joint-space
/// L-infinity travel. Small sets are solved exactly; larger ones use nearest neighbor plus
/// 2-opt, never returning anything longer than the input order.
inline std::vector<std::size_t> order_tour(const std::vector<Eigen::VectorXd>& configs, const Eigen::VectorXd& weights,
                                           std::size_t exact_limit = 10) {
  const std::size_t n = configs.size();
  if (n == 0) throw Error("order_tour: need at least one configuration");
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  if (n <= 2) return identity;
  detail::DistanceMatrix d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = weighted_linf(configs[i], configs[j], weights);
  if (n <= exact_limit) {
    auto best = detail::held_karp_path(d);
    return detail::path_length(d, best) <= detail::path_length(d, identity) ? best : identity;
  }
  std::vector<std::size_t> nn = detail::nearest_neighbor_path(d, 0);
  detail::two_opt(d, nn);
  std::vector<std::size_t> id = identity;
  detail::two_opt(d, id);
  return detail::path_length(d, nn) <= detail::path_length(d, id) ? nn : id;
}

inline std::vector<std::size_t> order_tour(const std::vector<Eigen::VectorXd>& configs) {
  if (configs.empty()) throw Error("order_tour: need at least one configuration");
  return order_tour(configs, Eigen::VectorXd::Ones(configs.front().size()));
}

// ---------------------------------------------------------------------------

struct PlanOptions {
  /// Accepted base configurations per marker, before the head sweep.
  std::size_t base_per_marker = 50;
  /// Re-aim the head at the image center before sweeping (kept only if still visible).
  bool center_head = true;
  bool sweep = true;
  /// Per-joint weights of the tour metric; empty means all ones.
  Eigen::VectorXd tour_weights;
  SamplingOptions sampling;
};

struct MarkerPlanStats {
  std::string marker;
  std::size_t base = 0;
  std::size_t emitted = 0;
  std::uint64_t attempts = 0;
  bool complete = false;
};

struct PosePlan {
  /// Grouped by marker, each group in tour order.
  std::vector<Configuration> configurations;
  std::vector<MarkerPlanStats> markers;

  bool complete() const {
    return std::all_of(markers.begin(), markers.end(), [](const MarkerPlanStats& s) { return s.complete; });
  }
};

/// Sampling, head sweep and tour ordering for every listed marker (all markers if empty).
inline PosePlan plan_poses(const RobotModel& m, std::vector<std::string> marker_ids, const VisibilityConstraints& c,
                           std::uint64_t seed, const PlanOptions& opts = {}) {
  if (marker_ids.empty())
    for (const MarkerMount& mk : m.markers) marker_ids.push_back(mk.name);
  Eigen::VectorXd weights = opts.tour_weights.size() ? opts.tour_weights : Eigen::VectorXd::Ones(m.joint_count());
  if (weights.size() != m.joint_count()) throw Error("plan_poses: tour weights need one entry per joint");
  PosePlan plan;
  for (const std::string& id : marker_ids) {
    const SamplingResult s =
        sample_configurations(m, id, c, opts.base_per_marker, splitmix64(seed ^ fnv1a(id)), opts.sampling);
    std::vector<Eigen::VectorXd> group;
    for (const Eigen::VectorXd& q : s.configurations) {
      Eigen::VectorXd base = q;
      if (opts.center_head) {
        const auto centered = aim_head(q, id, m, 0.5 * m.intrinsics.image_size);
        if (centered && check_visibility(*centered, id, m, c).accepted()) base = *centered;
      }
      if (opts.sweep) {
        for (Eigen::VectorXd& v : head_sweep(base, id, m, c)) group.push_back(std::move(v));
      } else {
        group.push_back(base);
      }
    }
    if (!group.empty())
      for (std::size_t i : order_tour(group, weights)) plan.configurations.push_back({group[i], id});
    plan.markers.push_back({id, s.configurations.size(), group.size(), s.attempts, s.complete});
  }
  return plan;
}

}  // namespace elcal
