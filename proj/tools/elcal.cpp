// elcal: pose planning, simulation, calibration and evaluation for elastic robot kinematics.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elcal/estimator.hpp"
#include "elcal/io.hpp"
#include "elcal/poseplan.hpp"
#include "elcal/synth.hpp"

using namespace elcal;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kPartial = 2;

constexpr const char* kCalibrationSchema = "elcal.calibration_report.v1";
constexpr const char* kEvaluationSchema = "elcal.evaluation_report.v1";

json stats_json(const ErrorStats& s) { return {{"mean", s.mean}, {"max", s.max}, {"count", s.count}}; }

json evaluation_json(const Evaluation& ev) {
  json j = {{"samples", ev.rows.size() + ev.skipped}, {"skipped", ev.skipped}, {"pixel_px", stats_json(ev.pixel)}};
  j["cartesian_m"] = ev.cartesian ? stats_json(*ev.cartesian) : json(nullptr);
  return j;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string evaluation_csv(const Evaluation& ev) {
  std::string out = "marker,depth_m,pixel_error_px,cartesian_error_m\n";
  for (const EvaluationRow& r : ev.rows) {
    out += r.marker + "," + format_double(r.depth) + "," + format_double(r.pixel_error) + ",";
    if (r.cartesian_error) out += format_double(*r.cartesian_error);
    out += "\n";
  }
  return out;
}

void warn(const std::string& msg) { std::cerr << "elcal: warning: " << msg << "\n"; }

// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string model, out;
  std::vector<std::string> markers;
  std::size_t n = 50;
  std::uint64_t seed = 1;
  bool no_sweep = false, no_center = false, allow_multiple = false;
  std::uint64_t max_attempts = 10'000'000;
  unsigned threads = 0;
  VisibilityConstraints c;
};

int plan_poses_cmd(const PlanArgs& a) {
  const RobotModel m = load_model(read_file(a.model));
  VisibilityConstraints c = a.c;
  c.require_exclusive = !a.allow_multiple;
  c.validate();
  PlanOptions o;
  o.base_per_marker = a.n;
  o.center_head = !a.no_center;
  o.sweep = !a.no_sweep;
  o.sampling.max_attempts = a.max_attempts;
  o.sampling.threads = a.threads;
  const PosePlan plan = plan_poses(m, a.markers, c, a.seed, o);
  write_file(a.out, save_configurations(plan.configurations));
  for (const MarkerPlanStats& s : plan.markers) {
    std::cout << s.marker << ": " << s.base << "/" << a.n << " base configurations, " << s.emitted
              << " after head sweep, " << s.attempts << " draws\n";
    if (!s.complete) warn("marker '" + s.marker + "': only " + std::to_string(s.base) + " of " + std::to_string(a.n) +
                          " configurations satisfy the constraints");
  }
  return plan.complete() ? kOk : kPartial;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string truth, configs, out;
  double sigma_u = 0.2;
  std::uint64_t seed = 1;
};

int simulate_cmd(const SimulateArgs& a) {
  const RobotModel truth = load_model(read_file(a.truth));
  const std::vector<Configuration> configs = load_configurations(read_file(a.configs));
  const SimulationResult r = simulate_measurements(truth, configs, a.sigma_u, a.seed);
  write_file(a.out, save_samples(r.samples));
  std::cout << r.samples.size() << " samples from " << configs.size() << " configurations\n";
  if (!r.skipped.empty())
    warn(std::to_string(r.skipped.size()) + " configurations not observable on the truth model were skipped");
  return kOk;
}

// ---------------------------------------------------------------------------

struct PerturbArgs {
  std::string model, out;
  std::uint64_t seed = 1;
  double dh_length_sigma, dh_angle_sigma;
  PerturbationSpec p;
};

int perturb_cmd(PerturbArgs a) {
  const ModelFile f = load_model_file(read_file(a.model));
  if (f.spec.free_count() == 0) warn("the model's parameter_spec has no free entries; the truth equals the model");
  a.p.dh_sigma = {a.dh_length_sigma, a.dh_angle_sigma, a.dh_length_sigma, a.dh_angle_sigma};
  const RobotModel truth = make_ground_truth(f.model, f.spec, a.p, a.seed);
  write_file(a.out, save_model(truth, f.spec));
  return kOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string model, samples, report, out_model, reference;
  std::vector<std::string> fix;
  double split_ratio = 2.0 / 3.0;
  std::uint64_t seed = 1;
  std::string covariance_mode = "fixed";
  SolverOptions opts;
};

int calibrate_cmd(const CalibrateArgs& a) {
  ModelFile f = load_model_file(read_file(a.model));
  const std::vector<MeasurementSample> samples = load_samples(read_file(a.samples));
  std::optional<RobotModel> reference;
  if (!a.reference.empty()) reference = load_model(read_file(a.reference));
  for (const std::string& path : a.fix) {
    bool found = false;
    for (ParameterEntry& e : f.spec.entries) {
      if (e.path == path || e.path.rfind(path + "/", 0) == 0) {
        e.free = false;
        found = true;
      }
    }
    if (!found) throw Error("--fix '" + path + "' matches no parameter_spec entry");
  }
  if (f.spec.free_count() == 0) throw Error("the parameter_spec has no free entries");
  const std::vector<std::size_t> outside = check_samples(samples, f.model);
  if (!outside.empty()) warn(std::to_string(outside.size()) + " samples lie outside the joint limits");

  SolverOptions opts = a.opts;
  opts.covariance_mode = parse_covariance_mode(a.covariance_mode);
  const SampleSplit split = split_samples(samples, a.split_ratio, a.seed);
  if (split.calibration.empty()) throw Error("no calibration samples after the split");

  const auto t0 = std::chrono::steady_clock::now();
  const CalibrationReport r = solve_map(split.calibration, f.model, f.spec, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!r.theta_hat.allFinite() || r.cost_trace.empty() || !std::isfinite(r.cost_trace.back()))
    throw Error("solver produced a non-finite estimate");

  const RobotModel calibrated = unpack(r.theta_hat, f.model, f.spec);
  const ParameterVector initial = pack(f.model, f.spec);
  const Evaluation held_out = evaluate(split.evaluation, calibrated, reference ? &*reference : nullptr);
  const Evaluation nominal = evaluate(split.evaluation, f.model, reference ? &*reference : nullptr);

  json params = json::array();
  for (std::size_t i = 0; i < r.parameter_names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    params.push_back({{"path", r.parameter_names[i]}, {"initial", initial[k]}, {"estimate", r.theta_hat[k]}});
  }
  json per_sample = json::array();
  for (const SampleResidual& s : r.per_sample)
    per_sample.push_back({{"marker", s.marker},
                          {"residual_px", {s.residual.x(), s.residual.y()}},
                          {"whitened_norm", s.whitened_norm},
                          {"depth_m", s.depth}});
  json report = {
      {"schema", kCalibrationSchema},
      {"options",
       {{"sigma_u_px", opts.sigma_u},
        {"sigma_x_m", opts.sigma_x},
        {"covariance_mode", to_string(opts.covariance_mode)},
        {"split_ratio", a.split_ratio},
        {"seed", a.seed},
        {"max_iterations", opts.max_iterations}}},
      {"solver",
       {{"iterations", r.iterations},
        {"termination", to_string(r.termination)},
        {"cost_trace", r.cost_trace},
        {"diagnostics",
         {{"parameters", r.diagnostics.parameters},
          {"rank", r.diagnostics.rank},
          {"jtj_condition", std::isfinite(r.diagnostics.jtj_condition) ? json(r.diagnostics.jtj_condition) : json(nullptr)},
          {"weakest_parameter", r.diagnostics.weakest_parameter}}}}},
      {"parameters", params},
      {"calibration", {{"samples", split.calibration.size()}, {"pixel_px", stats_json(r.pixel)}}},
      {"evaluation", evaluation_json(held_out)},
      {"nominal_evaluation", evaluation_json(nominal)},
      {"per_sample", per_sample},
  };
  write_file(a.report, report.dump(2) + "\n");
  write_file(a.out_model, save_model(calibrated, f.spec));

  std::cout << "calibrated " << r.theta_hat.size() << " parameters on " << split.calibration.size() << " samples in "
            << r.iterations << " iterations (" << to_string(r.termination) << ", " << seconds << " s)\n"
            << "held-out pixel error: mean " << held_out.pixel.mean << " px, max " << held_out.pixel.max << " px\n";
  if (held_out.cartesian)
    std::cout << "held-out cartesian error: mean " << 1000.0 * held_out.cartesian->mean << " mm, max "
              << 1000.0 * held_out.cartesian->max << " mm (nominal " << 1000.0 * nominal.cartesian->mean << " mm)\n";
  if (r.diagnostics.rank < r.diagnostics.parameters)
    warn("Jacobian rank " + std::to_string(r.diagnostics.rank) + " < " + std::to_string(r.diagnostics.parameters) +
         " parameters; weakest direction dominated by " + r.diagnostics.weakest_parameter);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string model, samples, reference, report, csv;
};

int evaluate_cmd(const EvaluateArgs& a) {
  const RobotModel m = load_model(read_file(a.model));
  const std::vector<MeasurementSample> samples = load_samples(read_file(a.samples));
  check_samples(samples, m);
  std::optional<RobotModel> reference;
  if (!a.reference.empty()) reference = load_model(read_file(a.reference));
  const Evaluation ev = evaluate(samples, m, reference ? &*reference : nullptr);
  json report = evaluation_json(ev);
  report["schema"] = kEvaluationSchema;
  write_file(a.report, report.dump(2) + "\n");
  if (!a.csv.empty()) write_file(a.csv, evaluation_csv(ev));
  std::cout << "pixel error: mean " << ev.pixel.mean << " px, max " << ev.pixel.max << " px over " << ev.pixel.count
            << " samples\n";
  if (ev.cartesian)
    std::cout << "cartesian error: mean " << 1000.0 * ev.cartesian->mean << " mm, max " << 1000.0 * ev.cartesian->max
              << " mm\n";
  if (ev.skipped) {
    warn(std::to_string(ev.skipped) + " samples could not be predicted and were skipped");
    return kPartial;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration of elastic tree-structured robot kinematics from on-board camera observations."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "elcal 0.1.0");

  PlanArgs plan;
  CLI::App* p = app.add_subcommand("plan-poses", "Sample visible measurement configurations and order them.");
  p->add_option("--model", plan.model, "Robot model file")->required()->check(CLI::ExistingFile);
  p->add_option("--marker", plan.markers, "Marker to plan for (repeatable, default all)");
  p->add_option("--n", plan.n, "Base configurations per marker")->check(CLI::PositiveNumber)->capture_default_str();
  p->add_option("--seed", plan.seed, "Random seed")->capture_default_str();
  p->add_option("--out", plan.out, "Configuration file to write")->required();
  p->add_option("--fov-margin", plan.c.fov_margin, "Image border margin (px)")->capture_default_str();
  p->add_option("--facing-min-cos", plan.c.facing_min_cos, "Minimum marker facing cosine")->capture_default_str();
  p->add_option("--min-depth", plan.c.min_depth, "Minimum marker depth (m)")->capture_default_str();
  p->add_option("--max-depth", plan.c.max_depth, "Maximum marker depth (m)")->capture_default_str();
  p->add_option("--occlusion-clearance", plan.c.occlusion_clearance, "Added sphere radius (m)")->capture_default_str();
  p->add_option("--sweep-inset", plan.c.sweep_inset, "Pull of sweep targets toward the center")->capture_default_str();
  p->add_flag("--allow-multiple", plan.allow_multiple, "Accept configurations where other markers are visible");
  p->add_flag("--no-sweep", plan.no_sweep, "Emit base configurations only");
  p->add_flag("--no-center", plan.no_center, "Do not re-aim the head at the image center");
  p->add_option("--max-attempts", plan.max_attempts, "Draws per marker before giving up")->capture_default_str();
  p->add_option("--threads", plan.threads, "Worker threads (0 = all cores)")->capture_default_str();

  SimulateArgs sim;
  CLI::App* s = app.add_subcommand("simulate", "Synthesize pixel measurements from a truth model.");
  s->add_option("--truth", sim.truth, "Ground-truth model file")->required()->check(CLI::ExistingFile);
  s->add_option("--configs", sim.configs, "Configuration file")->required()->check(CLI::ExistingFile);
  s->add_option("--sigma-u", sim.sigma_u, "Pixel noise (px)")->capture_default_str();
  s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s->add_option("--out", sim.out, "Measurement file to write")->required();

  PerturbArgs pert;
  const PerturbationSpec defaults;
  pert.p = defaults;
  pert.dh_length_sigma = defaults.dh_sigma.d;
  pert.dh_angle_sigma = defaults.dh_sigma.theta;
  CLI::App* pe = app.add_subcommand("perturb", "Draw a ground-truth model around a nominal one.");
  pe->add_option("--model", pert.model, "Nominal model file")->required()->check(CLI::ExistingFile);
  pe->add_option("--out", pert.out, "Truth model file to write")->required();
  pe->add_option("--seed", pert.seed, "Random seed")->capture_default_str();
  pe->add_option("--dh-length-sigma", pert.dh_length_sigma, "DH d and a (m)")->capture_default_str();
  pe->add_option("--dh-angle-sigma", pert.dh_angle_sigma, "DH theta and alpha (rad)")->capture_default_str();
  pe->add_option("--elasticity-scale-min", pert.p.elasticity_scale_min)->capture_default_str();
  pe->add_option("--elasticity-scale-max", pert.p.elasticity_scale_max)->capture_default_str();
  pe->add_option("--mount-length-sigma", pert.p.mount_length_sigma, "Camera mount translation (m)")
      ->capture_default_str();
  pe->add_option("--mount-angle-sigma", pert.p.mount_angle_sigma, "Camera mount rotation (rad)")->capture_default_str();
  pe->add_option("--marker-sigma", pert.p.marker_sigma, "Marker position (m)")->capture_default_str();
  pe->add_option("--intrinsics-px-sigma", pert.p.intrinsics_px_sigma, "Focal length and center (px)")
      ->capture_default_str();
  pe->add_option("--intrinsics-xi-sigma", pert.p.intrinsics_xi_sigma, "Distortion")->capture_default_str();
  pe->add_option("--ripple-amplitude", pert.p.ripple_amplitude, "Joint angle ripple (rad), 0 = off")
      ->capture_default_str();
  pe->add_option("--ripple-period", pert.p.ripple_period, "Ripple period in joint angle (rad)")->capture_default_str();

  CalibrateArgs cal;
  CLI::App* c = app.add_subcommand("calibrate", "MAP calibration of the model's free parameters.");
  c->add_option("--model", cal.model, "Nominal model file with parameter_spec")->required()->check(CLI::ExistingFile);
  c->add_option("--samples", cal.samples, "Measurement file")->required()->check(CLI::ExistingFile);
  c->add_option("--report", cal.report, "JSON report to write")->required();
  c->add_option("--out-model", cal.out_model, "Calibrated model file to write")->required();
  c->add_option("--reference", cal.reference, "Reference model for cartesian evaluation")->check(CLI::ExistingFile);
  c->add_option("--split-ratio", cal.split_ratio, "Fraction of samples used for calibration")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c->add_option("--seed", cal.seed, "Split seed")->capture_default_str();
  c->add_option("--sigma-u", cal.opts.sigma_u, "Pixel noise (px)")->capture_default_str();
  c->add_option("--sigma-x", cal.opts.sigma_x, "Virtual cartesian noise (m), 0 = unweighted")->capture_default_str();
  c->add_option("--covariance-mode", cal.covariance_mode, "fixed or relinearized")
      ->check(CLI::IsMember({"fixed", "relinearized"}))
      ->capture_default_str();
  c->add_option("--fix", cal.fix, "Hold a parameter path (or prefix) at its model value (repeatable)");
  c->add_option("--max-iterations", cal.opts.max_iterations)->capture_default_str();
  c->add_option("--threads", cal.opts.threads, "Worker threads (0 = all cores)")->capture_default_str();

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "Pixel and cartesian errors of a model on measurements.");
  e->add_option("--model", ev.model, "Model to evaluate")->required()->check(CLI::ExistingFile);
  e->add_option("--samples", ev.samples, "Measurement file")->required()->check(CLI::ExistingFile);
  e->add_option("--reference", ev.reference, "Reference model for cartesian errors")->check(CLI::ExistingFile);
  e->add_option("--report", ev.report, "JSON statistics to write")->required();
  e->add_option("--csv", ev.csv, "Per-sample CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kError;
  }

  try {
    if (*p) return plan_poses_cmd(plan);
    if (*s) return simulate_cmd(sim);
    if (*pe) return perturb_cmd(pert);
    if (*c) return calibrate_cmd(cal);
    if (*e) return evaluate_cmd(ev);
  } catch (const std::exception& err) {
    std::cerr << "elcal: error: " << err.what() << "\n";
    return kError;
  }
  return kError;
}
