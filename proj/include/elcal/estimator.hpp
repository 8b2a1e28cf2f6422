#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "elcal/camera.hpp"
#include "elcal/error.hpp"
#include "elcal/kinematics.hpp"
#include "elcal/model.hpp"
#include "elcal/parallel.hpp"
#include "elcal/rng.hpp"

namespace elcal {

enum class CovarianceMode {
  /// Effective covariance refreshed from the current estimate before each step, held fixed within it.
  fixed_per_iteration,
  /// Effective covariance re-evaluated at every residual evaluation, including Jacobian columns.
  relinearized,
};

enum class JacobianMode { forward, central };

struct SolverOptions {
  int max_iterations = 200;
  double cost_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 0.3;
  JacobianMode jacobian_mode = JacobianMode::forward;
  CovarianceMode covariance_mode = CovarianceMode::fixed_per_iteration;
  /// Pixel noise (px).
  double sigma_u = 0.2;
  /// Virtual cartesian noise (m); 0 disables the depth-dependent weighting.
  double sigma_x = 0.01;
  /// Worker threads for Jacobian columns, 0 = hardware concurrency.
  unsigned threads = 0;

  void validate() const {
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (!(cost_tolerance > 0.0) || !(step_tolerance > 0.0)) throw Error("tolerances must be > 0");
    if (!(initial_damping > 0.0) || !(damping_up > 1.0) || !(damping_down > 0.0 && damping_down < 1.0))
      throw Error("invalid damping schedule");
    if (!(sigma_u > 0.0)) throw Error("sigma_u must be > 0");
    if (!(sigma_x >= 0.0)) throw Error("sigma_x must be >= 0");
  }
};

inline std::string to_string(CovarianceMode m) {
  return m == CovarianceMode::fixed_per_iteration ? "fixed" : "relinearized";
}

inline CovarianceMode parse_covariance_mode(const std::string& s) {
  if (s == "fixed") return CovarianceMode::fixed_per_iteration;
  if (s == "relinearized") return CovarianceMode::relinearized;
  throw Error("unknown covariance mode '" + s + "' (expected 'fixed' or 'relinearized')");
}

/// Predicted observation of one marker plus the intermediates needed for weighting.
struct Prediction {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d marker_world = Eigen::Vector3d::Zero();
  Eigen::Isometry3d camera = Eigen::Isometry3d::Identity();
  double depth = 0.0;
};

/// Forward kinematics in torque equilibrium followed by projection.
/// Throws EquilibriumError or BehindCameraError.
inline Prediction predict(const RobotModel& model, const Eigen::VectorXd& q, const MarkerMount& marker) {
  const Equilibrium eq = solve_equilibrium(q, model);
  Prediction p;
  p.marker_world = marker_world(eq.frames, marker);
  p.camera = camera_pose(eq.frames, model.camera);
  p.depth = to_camera_frame(p.marker_world, p.camera).z();
  p.pixel = project(p.marker_world, p.camera, model.intrinsics);
  return p;
}

/// h(q, theta): unpack the parameters into the model and predict the marker pixel.
inline Prediction measure(const Eigen::VectorXd& q, const std::string& marker_id, const ParameterVector& theta,
                          const RobotModel& model, const ParameterSpec& spec) {
  const RobotModel m = unpack(theta, model, spec);
  return predict(m, q, m.marker(marker_id));
}

// ---------------------------------------------------------------------------

enum class Termination { zero_cost, cost_tolerance, step_tolerance, max_iterations, damping_overflow };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::zero_cost: return "zero_cost";
    case Termination::cost_tolerance: return "cost_tolerance";
    case Termination::step_tolerance: return "step_tolerance";
    case Termination::max_iterations: return "max_iterations";
    case Termination::damping_overflow: return "damping_overflow";
  }
  return "unknown";
}

struct ErrorStats {
  double mean = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

inline ErrorStats summarize(const std::vector<double>& values) {
  ErrorStats s;
  for (double v : values) {
    s.mean += v;
    s.max = std::max(s.max, v);
  }
  s.count = values.size();
  if (!values.empty()) s.mean /= static_cast<double>(values.size());
  return s;
}

struct SampleResidual {
  std::string marker;
  Eigen::Vector2d residual = Eigen::Vector2d::Zero();  // measured - predicted, px
  double whitened_norm = 0.0;
  double depth = 0.0;  // m
};

struct IdentifiabilityDiagnostics {
  std::size_t parameters = 0;
  std::size_t rank = 0;
  /// Condition number of J^T J for the column-normalized whitened data Jacobian.
  double jtj_condition = 0.0;
  /// Parameter with the largest weight in the weakest singular direction.
  std::string weakest_parameter;
};

struct CalibrationReport {
  ParameterVector theta_hat;
  std::vector<std::string> parameter_names;
  std::vector<SampleResidual> per_sample;
  ErrorStats pixel;
  std::vector<double> cost_trace;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
  IdentifiabilityDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------

/// Whitened MAP residuals r = [L_n^-1 (u_n - h(q_n, theta)); (theta - theta_p) / sigma_p].
class CalibrationProblem {
 public:
  /// Per-sample inverse Cholesky factors of the effective pixel covariance.
  using Whitening = std::vector<Eigen::Matrix2d>;

  CalibrationProblem(std::vector<MeasurementSample> samples, RobotModel model, const ParameterSpec& spec,
                     SolverOptions opts)
      : samples_(std::move(samples)), model_(std::move(model)), spec_(resolve(spec, model_)), opts_(opts) {
    opts_.validate();
    marker_index_.reserve(samples_.size());
    for (std::size_t n = 0; n < samples_.size(); ++n) {
      const int idx = model_.marker_index(samples_[n].marker);
      if (idx < 0) throw InvalidSampleError(n, "unknown marker '" + samples_[n].marker + "'");
      if (samples_[n].q.size() != model_.joint_count())
        throw InvalidSampleError(n, "joint vector length does not match the model");
      if (!samples_[n].u.allFinite()) throw InvalidSampleError(n, "non-finite pixel coordinates");
      marker_index_.push_back(idx);
    }
    for (Eigen::Index j = 0; j < spec_.prior_sigma.size(); ++j)
      if (std::isfinite(spec_.prior_sigma[j])) prior_rows_.push_back(j);
  }

  const ResolvedSpec& spec() const { return spec_; }
  const RobotModel& model() const { return model_; }
  const SolverOptions& options() const { return opts_; }
  const std::vector<MeasurementSample>& samples() const { return samples_; }
  std::size_t parameter_count() const { return spec_.size(); }
  Eigen::Index residual_count() const {
    return static_cast<Eigen::Index>(2 * samples_.size() + prior_rows_.size());
  }

  ParameterVector initial() const {
    ParameterVector theta(static_cast<Eigen::Index>(spec_.size()));
    for (std::size_t i = 0; i < spec_.size(); ++i)
      theta[static_cast<Eigen::Index>(i)] = parameter_value(model_, spec_.paths[i]);
    return theta;
  }

  RobotModel model_at(const ParameterVector& theta) const { return unpack(theta, model_, spec_.paths); }

  /// Throws InvalidSampleError naming the first sample that cannot be predicted.
  std::vector<Prediction> predict_all(const ParameterVector& theta) const {
    return predict_all(model_at(theta));
  }

  std::vector<Prediction> predict_all(const RobotModel& m) const {
    std::vector<Prediction> out(samples_.size());
    for (std::size_t n = 0; n < samples_.size(); ++n) {
      try {
        out[n] = predict(m, samples_[n].q, m.markers[static_cast<std::size_t>(marker_index_[n])]);
      } catch (const InvalidSampleError&) {
        throw;
      } catch (const Error& e) {
        throw InvalidSampleError(n, e.what());
      }
    }
    return out;
  }

  Whitening whitening(const std::vector<Prediction>& pred, const CameraIntrinsics& intr) const {
    Whitening w(pred.size());
    for (std::size_t n = 0; n < pred.size(); ++n) {
      const EffectivePixelCovariance c =
          effective_covariance(pred[n].marker_world, pred[n].camera, intr, opts_.sigma_u, opts_.sigma_x);
      Eigen::LLT<Eigen::Matrix2d> llt(c.matrix);
      if (llt.info() != Eigen::Success) throw InvalidSampleError(n, "effective covariance is not positive definite");
      w[n] = llt.matrixL().solve(Eigen::Matrix2d::Identity());
    }
    return w;
  }

  Whitening whitening(const ParameterVector& theta) const {
    const RobotModel m = model_at(theta);
    return whitening(predict_all(m), m.intrinsics);
  }

  /// Residual vector at theta. With `fixed` the given whitening is used, otherwise it is
  /// computed from theta itself.
  Eigen::VectorXd residuals(const ParameterVector& theta, const Whitening* fixed = nullptr) const {
    const RobotModel m = model_at(theta);
    return assemble(theta, predict_all(m), m.intrinsics, fixed);
  }

  Eigen::VectorXd assemble(const ParameterVector& theta, const std::vector<Prediction>& pred,
                           const CameraIntrinsics& intr, const Whitening* fixed) const {
    Whitening own;
    if (!fixed) {
      own = whitening(pred, intr);
      fixed = &own;
    }
    Eigen::VectorXd r(residual_count());
    for (std::size_t n = 0; n < samples_.size(); ++n) {
      const Eigen::Vector2d du = samples_[n].u - pred[n].pixel;
      r.segment<2>(static_cast<Eigen::Index>(2 * n)) = (*fixed)[n] * du;
    }
    Eigen::Index row = static_cast<Eigen::Index>(2 * samples_.size());
    for (Eigen::Index j : prior_rows_) r[row++] = (theta[j] - spec_.prior_mean[j]) / spec_.prior_sigma[j];
    return r;
  }

  /// Finite-difference Jacobian of the residual vector. Columns are independent and
  /// evaluated in parallel. Parameters that only touch the intrinsics reuse the geometry.
  Eigen::MatrixXd jacobian(const ParameterVector& theta, const Whitening* fixed = nullptr,
                           const std::vector<Prediction>* base = nullptr) const {
    const auto cols = static_cast<Eigen::Index>(spec_.size());
    Eigen::MatrixXd jac(residual_count(), cols);
    std::vector<Prediction> base_pred;
    if (!base) {
      base_pred = predict_all(theta);
      base = &base_pred;
    }
    const RobotModel m0 = model_at(theta);
    const Eigen::VectorXd r0 = assemble(theta, *base, m0.intrinsics, fixed);
    const bool central = opts_.jacobian_mode == JacobianMode::central;
    parallel_for(spec_.size(), opts_.threads, [&](std::size_t j) {
      const auto col = static_cast<Eigen::Index>(j);
      const double h = 1e-7 * std::max(1.0, std::abs(theta[col]));
      auto eval = [&](double step) {
        ParameterVector t = theta;
        t[col] += step;
        if (spec_.paths[j].kind != ParameterKind::intrinsic) return residuals(t, fixed);
        const RobotModel m = model_at(t);
        std::vector<Prediction> pred = *base;
        for (std::size_t n = 0; n < pred.size(); ++n) {
          try {
            pred[n].pixel = project(pred[n].marker_world, pred[n].camera, m.intrinsics);
          } catch (const Error& e) {
            throw InvalidSampleError(n, e.what());
          }
        }
        return assemble(t, pred, m.intrinsics, fixed);
      };
      if (central)
        jac.col(col) = (eval(h) - eval(-h)) / (2.0 * h);
      else
        jac.col(col) = (eval(h) - r0) / h;
    });
    return jac;
  }

  IdentifiabilityDiagnostics diagnose(const Eigen::MatrixXd& jac) const {
    IdentifiabilityDiagnostics d;
    d.parameters = spec_.size();
    if (d.parameters == 0) return d;
    Eigen::MatrixXd data = jac.topRows(static_cast<Eigen::Index>(2 * samples_.size()));
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double norm = data.col(j).norm();
      if (norm > 0.0) data.col(j) /= norm;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double smax = s.size() > 0 ? s[0] : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] > kRankTolerance * smax) ++d.rank;
    const double smin = s.size() == static_cast<Eigen::Index>(d.parameters) ? s[s.size() - 1] : 0.0;
    d.jtj_condition = smin > 0.0 ? (smax / smin) * (smax / smin) : std::numeric_limits<double>::infinity();
    if (svd.matrixV().cols() == static_cast<Eigen::Index>(d.parameters)) {
      Eigen::Index worst = 0;
      svd.matrixV().col(svd.matrixV().cols() - 1).cwiseAbs().maxCoeff(&worst);
      d.weakest_parameter = spec_.names[static_cast<std::size_t>(worst)];
    }
    return d;
  }

  /// Relative singular-value threshold below which a direction counts as unidentifiable.
  static constexpr double kRankTolerance = 1e-6;

 private:
  std::vector<MeasurementSample> samples_;
  RobotModel model_;
  ResolvedSpec spec_;
  SolverOptions opts_;
  std::vector<int> marker_index_;
  std::vector<Eigen::Index> prior_rows_;
};

struct Residuals {
  Eigen::VectorXd r;
  std::optional<Eigen::MatrixXd> jacobian;
  double cost = 0.0;
};

/// Whitened residuals at theta; cost = |r|^2 is the MAP objective. The Jacobian, when
/// requested, follows opts.covariance_mode.
inline Residuals residuals(const std::vector<MeasurementSample>& samples, const ParameterVector& theta,
                           const RobotModel& model, const ParameterSpec& spec, const SolverOptions& opts,
                           bool with_jacobian = false) {
  const CalibrationProblem problem(samples, model, spec, opts);
  Residuals out;
  const RobotModel m = problem.model_at(theta);
  const std::vector<Prediction> pred = problem.predict_all(m);
  const CalibrationProblem::Whitening w = problem.whitening(pred, m.intrinsics);
  out.r = problem.assemble(theta, pred, m.intrinsics, &w);
  out.cost = out.r.squaredNorm();
  if (with_jacobian) {
    const bool fixed = opts.covariance_mode == CovarianceMode::fixed_per_iteration;
    out.jacobian = problem.jacobian(theta, fixed ? &w : nullptr, &pred);
  }
  return out;
}

namespace detail {

inline std::vector<SampleResidual> sample_residuals(const CalibrationProblem& problem, const ParameterVector& theta) {
  const RobotModel m = problem.model_at(theta);
  const std::vector<Prediction> pred = problem.predict_all(m);
  const CalibrationProblem::Whitening w = problem.whitening(pred, m.intrinsics);
  std::vector<SampleResidual> out(pred.size());
  for (std::size_t n = 0; n < pred.size(); ++n) {
    out[n].marker = problem.samples()[n].marker;
    out[n].residual = problem.samples()[n].u - pred[n].pixel;
    out[n].whitened_norm = (w[n] * out[n].residual).norm();
    out[n].depth = pred[n].depth;
  }
  return out;
}

}  // namespace detail

/// Levenberg-Marquardt on the whitened MAP residuals of `problem`, starting from its model.
inline CalibrationReport solve_map(const CalibrationProblem& problem) {
  const SolverOptions& opts = problem.options();
  if (problem.samples().empty()) throw Error("no samples to calibrate from");
  CalibrationReport report;
  report.parameter_names = problem.spec().names;

  ParameterVector theta = problem.initial();
  RobotModel m = problem.model_at(theta);
  std::vector<Prediction> pred = problem.predict_all(m);
  CalibrationProblem::Whitening w = problem.whitening(pred, m.intrinsics);
  Eigen::VectorXd r = problem.assemble(theta, pred, m.intrinsics, &w);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) {
    for (Eigen::Index i = 0; i < r.size(); ++i)
      if (!std::isfinite(r[i])) throw InvalidSampleError(static_cast<std::size_t>(i / 2), "non-finite residual");
  }
  report.cost_trace.push_back(cost);

  const bool fixed = opts.covariance_mode == CovarianceMode::fixed_per_iteration;
  double lambda = opts.initial_damping;
  Eigen::MatrixXd jac;
  bool have_jac = false;
  report.termination = Termination::max_iterations;
  int iter = 0;
  while (problem.parameter_count() > 0) {
    if (cost == 0.0) {
      report.termination = Termination::zero_cost;
      break;
    }
    if (iter >= opts.max_iterations) break;
    ++iter;
    jac = problem.jacobian(theta, fixed ? &w : nullptr, &pred);
    have_jac = true;
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    const Eigen::VectorXd diag = a.diagonal().cwiseMax(1e-12 * std::max(1.0, a.diagonal().maxCoeff()));
    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd delta = -damped.ldlt().solve(g);
      if (!delta.allFinite() || delta.norm() <= opts.step_tolerance * (theta.norm() + opts.step_tolerance)) {
        report.termination = Termination::step_tolerance;
        stop = true;
        break;
      }
      const ParameterVector candidate = theta + delta;
      double candidate_cost = std::numeric_limits<double>::infinity();
      RobotModel cm;
      std::vector<Prediction> cpred;
      CalibrationProblem::Whitening cw;
      Eigen::VectorXd cr;
      try {
        cm = problem.model_at(candidate);
        cpred = problem.predict_all(cm);
        cw = problem.whitening(cpred, cm.intrinsics);
        cr = problem.assemble(candidate, cpred, cm.intrinsics, &cw);
        candidate_cost = cr.squaredNorm();
      } catch (const Error&) {
        // A step that pushes a sample out of view or past equilibrium is simply rejected.
      }
      if (std::isfinite(candidate_cost) && candidate_cost < cost) {
        const double rel = (cost - candidate_cost) / cost;
        theta = candidate;
        pred = std::move(cpred);
        w = std::move(cw);
        r = std::move(cr);
        cost = candidate_cost;
        report.cost_trace.push_back(cost);
        lambda = std::max(lambda * opts.damping_down, 1e-15);
        accepted = true;
        if (rel < opts.cost_tolerance) {
          report.termination = Termination::cost_tolerance;
          stop = true;
        }
      } else {
        lambda *= opts.damping_up;
        if (lambda > 1e16) {
          report.termination = Termination::damping_overflow;
          stop = true;
          break;
        }
      }
    }
    if (stop) break;
  }
  report.iterations = iter;
  report.theta_hat = theta;
  report.per_sample = detail::sample_residuals(problem, theta);
  std::vector<double> errs;
  errs.reserve(report.per_sample.size());
  for (const auto& s : report.per_sample) errs.push_back(s.residual.norm());
  report.pixel = summarize(errs);
  if (problem.parameter_count() > 0) {
    if (!have_jac || report.termination != Termination::zero_cost)
      jac = problem.jacobian(theta, fixed ? &w : nullptr, &pred);
    report.diagnostics = problem.diagnose(jac);
  }
  return report;
}

inline CalibrationReport solve_map(const std::vector<MeasurementSample>& samples, const RobotModel& model,
                                   const ParameterSpec& spec, const SolverOptions& opts) {
  return solve_map(CalibrationProblem(samples, model, spec, opts));
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationRow {
  std::string marker;
  double depth = 0.0;
  double pixel_error = 0.0;
  std::optional<double> cartesian_error;
};

struct Evaluation {
  std::vector<EvaluationRow> rows;
  ErrorStats pixel;
  std::optional<ErrorStats> cartesian;
  /// Samples that could not be predicted (equilibrium failure, behind the camera).
  std::size_t skipped = 0;
};

/// Pixel errors of `model` on the samples and, if a reference model is given, the world
/// marker position error against it. Invalid samples are skipped and counted.
inline Evaluation evaluate(const std::vector<MeasurementSample>& samples, const RobotModel& model,
                           const RobotModel* reference = nullptr) {
  Evaluation ev;
  std::vector<double> pix, cart;
  for (const MeasurementSample& s : samples) {
    try {
      const Prediction p = predict(model, s.q, model.marker(s.marker));
      EvaluationRow row{s.marker, p.depth, (s.u - p.pixel).norm(), std::nullopt};
      if (reference) {
        const Equilibrium eq = solve_equilibrium(s.q, *reference);
        row.cartesian_error = (marker_world(eq.frames, reference->marker(s.marker)) - p.marker_world).norm();
        cart.push_back(*row.cartesian_error);
      }
      pix.push_back(row.pixel_error);
      ev.rows.push_back(std::move(row));
    } catch (const EquilibriumError&) {
      ++ev.skipped;
    } catch (const BehindCameraError&) {
      ++ev.skipped;
    }
  }
  ev.pixel = summarize(pix);
  if (reference) ev.cartesian = summarize(cart);
  return ev;
}

inline Evaluation evaluate(const std::vector<MeasurementSample>& samples, const ParameterVector& theta,
                           const RobotModel& model, const ParameterSpec& spec,
                           const RobotModel* reference = nullptr) {
  return evaluate(samples, unpack(theta, model, spec), reference);
}

// ---------------------------------------------------------------------------

struct SampleSplit {
  std::vector<MeasurementSample> calibration;
  std::vector<MeasurementSample> evaluation;
};

/// Deterministic split, stratified by marker: each marker's samples are shuffled with the
/// seed and the first floor(fraction * count) go to calibration. The remaining quota up to
/// round(fraction * total) goes one each to the markers with the largest remainders (ties
/// by marker name). Order within each part follows the input order.
inline SampleSplit split_samples(const std::vector<MeasurementSample>& samples, double calibration_fraction,
                                 std::uint64_t seed) {
  if (!(calibration_fraction > 0.0 && calibration_fraction <= 1.0))
    throw Error("calibration fraction must be in (0, 1]");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].marker].push_back(i);

  struct Quota {
    std::vector<std::size_t>* idx;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (auto& [marker, idx] : groups) {
    std::mt19937_64 rng = stream_rng(seed, fnv1a(marker));
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    const double exact = calibration_fraction * static_cast<double>(idx.size());
    const auto take = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quotas.push_back({&idx, take, exact - static_cast<double>(take)});
    assigned += take;
  }
  const auto total = static_cast<std::size_t>(std::llround(calibration_fraction * static_cast<double>(samples.size())));
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder + 1e-12; });
  for (std::size_t k = 0; k < order.size() && assigned < total; ++k) {
    Quota& q = quotas[order[k]];
    if (q.take < q.idx->size()) ++q.take, ++assigned;
  }

  std::vector<char> to_calibration(samples.size(), 0);
  for (const Quota& q : quotas)
    for (std::size_t k = 0; k < q.take; ++k) to_calibration[(*q.idx)[k]] = 1;
  SampleSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (to_calibration[i] ? split.calibration : split.evaluation).push_back(samples[i]);
  return split;
}

}  // namespace elcal
