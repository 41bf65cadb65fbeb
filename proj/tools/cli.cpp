#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "magcath/control.hpp"
#include "magcath/csv.hpp"
#include "magcath/estimation.hpp"
#include "magcath/jacobians.hpp"
#include "magcath/metrics.hpp"
#include "magcath/spec_io.hpp"

namespace magcath::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json vecx_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create output directory " + p.string());
  return p;
}

Eigen::VectorXd parse_currents(const std::string& text, int expected) {
  if (text.empty()) return Eigen::VectorXd::Zero(expected);
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw InputError("malformed current value '" + cell + "'");
    }
  }
  Eigen::VectorXd v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

struct SolveArgs {
  std::string spec = "pebax35";
  std::string out = ".";
  std::string currents;
  double insert = -1.0;
  double steps_per_mm = 4.0;
  double tol = 1e-8;
  bool trace = false;
  bool fd = false;
};

int cmd_solve(const SolveArgs& a) {
  const CatheterSpec spec = resolve_spec(a.spec);
  const fs::path out = prepare_out(a.out);

  ActuationInput input;
  input.currents = parse_currents(a.currents, 3 * spec.actuator_count());
  input.inserted_length = a.insert < 0.0 ? spec.total_length() : a.insert;
  if (auto v = validate_actuation(spec, input); !v.empty())
    throw SpecError("invalid actuation input", v);

  SolverOptions sopts;
  sopts.tolerance = a.tol;
  sopts.fd_residual_jacobian = a.fd;
  sopts.integrator.steps_per_mm = a.steps_per_mm;
  sopts.integrator.record_trace = a.trace;

  const ExternalLoads loads;
  const BvpSolution sol =
      solve_bvp(spec, loads, input, Eigen::Vector3d::Zero(), sopts);

  json j;
  j["spec"] = spec.name;
  j["currents"] = vecx_json(input.currents);
  j["inserted_length"] = input.inserted_length;
  j["solver"] = {{"tolerance", a.tol},
                 {"steps_per_mm", a.steps_per_mm},
                 {"fd_residual_jacobian", a.fd}};
  j["converged"] = sol.converged;
  j["iterations"] = sol.iterations;
  j["residual_norm"] = sol.residual_norm;
  j["u0"] = vec_json(sol.u0);
  j["tip"] = {{"p", vec_json(sol.ivp.tip.p)},
              {"R", mat_json(sol.ivp.tip.R)},
              {"u", vec_json(sol.ivp.tip.u)}};
  j["l_tip"] = vec_json(sol.ivp.l_tip);
  j["tip_actuated"] = sol.ivp.tip_actuated;
  write_json_file(out / "tip.json", j);

  if (a.trace) write_trace_csv((out / "trace.csv").string(), sol.ivp.trace);

  std::cout << "tip [" << sol.ivp.tip.p.x() << ", " << sol.ivp.tip.p.y()
            << ", " << sol.ivp.tip.p.z() << "] mm, residual "
            << sol.residual_norm << " N*mm, " << sol.iterations
            << " iterations\n";
  if (!sol.converged) {
    std::cerr << json{{"error",
                       {{"type", "non_convergence"},
                        {"message", "boundary solve did not converge"},
                        {"residual_norm", sol.residual_norm}}}}
                     .dump()
              << '\n';
    return 4;
  }
  return 0;
}

struct TrackArgs {
  std::string spec = "pebax35";
  std::string out = ".";
  std::string shape = "circle";
  int points = 100;
  double size = 8.0;
  double lambda = 0.1;
  double tol = 1e-3;
  double steps_per_mm = 4.0;
  std::uint64_t seed = 0;
  bool fd = false;
};

void write_track_outputs(const fs::path& out, const TrackArgs& a,
                         const CatheterSpec& spec, const TrajectoryFrame& frame,
                         const TrackResult& result) {
  {
    std::ofstream csv(out / "trajectory.csv");
    if (!csv) throw InputError("cannot write trajectory.csv");
    const int nc = 3 * spec.actuator_count();
    csv << "index,px_des,py_des,pz_des,px_model,py_model,pz_model";
    for (int i = 0; i < nc; ++i) csv << ",i" << (i + 1);
    csv << ",insert_mm,u0x,u0y,u0z,inner_iterations,converged\n";
    csv.precision(17);
    for (const auto& s : result.steps) {
      csv << s.waypoint;
      for (int i = 0; i < 3; ++i) csv << ',' << s.p_desired(i);
      for (int i = 0; i < 3; ++i) csv << ',' << s.p_model(i);
      for (int i = 0; i < nc; ++i) csv << ',' << s.currents(i);
      csv << ',' << s.inserted_length;
      for (int i = 0; i < 3; ++i) csv << ',' << s.u0(i);
      csv << ',' << s.inner_iterations << ',' << (s.converged ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream csv(out / "step_timing.csv");
    if (!csv) throw InputError("cannot write step_timing.csv");
    csv << "index,step_ms\n";
    csv.precision(17);
    for (const auto& s : result.steps)
      csv << s.waypoint << ',' << s.wall_ms << '\n';
  }
  std::vector<Eigen::Vector3d> desired, model;
  for (const auto& s : result.steps) {
    desired.push_back(s.p_desired);
    model.push_back(s.p_model);
  }
  write_points_csv((out / "desired.csv").string(), desired);
  write_points_csv((out / "model.csv").string(), model);

  json j;
  j["spec"] = spec.name;
  j["shape"] = a.shape;
  j["points"] = a.points;
  j["size"] = a.size;
  j["seed"] = a.seed;
  j["fd_jacobian"] = a.fd;
  j["frame"] = {{"center", vec_json(frame.center)},
                {"orientation", mat_json(frame.orientation)}};
  j["success"] = result.success;
  j["failed_waypoint"] = result.failed_waypoint;
  j["rmse_model_vs_desired"] = result.rmse_model_vs_desired;
  j["mean_step_ms"] = result.mean_step_ms;
  j["p95_step_ms"] = result.p95_step_ms;
  write_json_file(out / "summary.json", j);
}

int cmd_track(const TrackArgs& a) {
  if (a.points < 8) throw InputError("a trajectory needs at least 8 waypoints");
  const CatheterSpec spec = resolve_spec(a.spec);
  const fs::path out = prepare_out(a.out);
  const TrajectoryShape shape = shape_from_name(a.shape);
  const ExternalLoads loads;

  IkOptions ik;
  ik.damping = a.lambda;
  ik.position_tolerance = a.tol;
  ik.fd_jacobian = a.fd;
  ik.jacobian.solver.integrator.steps_per_mm = a.steps_per_mm;

  PlanOptions plan;
  plan.solver = ik.jacobian.solver;

  const TrajectoryFrame frame = plan_trajectory_frame(
      spec, loads, shape_max_radius(shape, a.size), plan);
  const auto waypoints =
      place_samples(frame, shape_samples(shape, a.size, a.points));
  const TrackResult result = track_trajectory(spec, loads, waypoints, ik);

  write_track_outputs(out, a, spec, frame, result);

  std::cout << a.shape << ": " << result.steps.size() << "/" << a.points
            << " waypoints, rmse " << result.rmse_model_vs_desired
            << " mm, mean step " << result.mean_step_ms << " ms\n";
  if (!result.success) {
    std::cerr << json{{"error",
                       {{"type", "tracking_failure"},
                        {"message", "waypoint not reached"},
                        {"failed_waypoint", result.failed_waypoint}}}}
                     .dump()
              << '\n';
    return 3;
  }
  return 0;
}

struct MetricsArgs {
  std::vector<std::string> traces;
  std::string reference;
  std::string mode = "aligned";
  std::string out = ".";
  std::uint64_t seed = 0;
};

int cmd_metrics(const MetricsArgs& a) {
  const fs::path out = prepare_out(a.out);
  if (a.traces.empty()) throw InputError("no trace files given");
  if (a.mode != "raw" && a.mode != "aligned" && a.mode != "method2")
    throw InputError("mode must be raw, aligned, or method2");

  std::vector<PointSet> traces;
  for (const auto& path : a.traces) traces.push_back(read_points_csv(path));

  json rows = json::array();
  std::vector<double> values;
  std::string reference_label;

  if (a.mode == "method2") {
    if (traces.size() < 2)
      throw InputError("method2 needs at least two traces");
    std::mt19937_64 rng(a.seed);
    const auto ref = static_cast<std::size_t>(
        std::uniform_int_distribution<std::size_t>(0, traces.size() - 1)(rng));
    reference_label = a.traces[ref];
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (i == ref) continue;
      const double v = aligned_rmse(traces[i], traces[ref]);
      rows.push_back({{"trace", a.traces[i]}, {"value", v}});
      values.push_back(v);
    }
  } else {
    if (a.reference.empty())
      throw InputError("mode " + a.mode + " needs --reference");
    const PointSet ref = read_points_csv(a.reference);
    reference_label = a.reference;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const double v = a.mode == "raw" ? rmse(traces[i], ref)
                                       : aligned_rmse(traces[i], ref);
      rows.push_back({{"trace", a.traces[i]}, {"value", v}});
      values.push_back(v);
    }
  }

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());

  json j;
  j["mode"] = a.mode;
  j["seed"] = a.seed;
  j["reference"] = reference_label;
  j["rows"] = rows;
  j["mean"] = mean;
  j["variance"] = var;
  j["count"] = values.size();
  write_json_file(out / "metrics.json", j);

  for (const auto& row : rows)
    std::cout << row["trace"].get<std::string>() << "  "
              << row["value"].get<double>() << " mm\n";
  std::cout << "mean " << mean << " mm, variance " << var << " mm^2 ("
            << a.mode << ")\n";
  return 0;
}

struct EstimateArgs {
  std::string observations;
  std::string spec = "pebax35";
  std::string out = ".";
  std::string freeze;
  int max_iterations = 200;
};

int cmd_estimate(const EstimateArgs& a) {
  const CatheterSpec tmpl = resolve_spec(a.spec);
  const fs::path out = prepare_out(a.out);
  const ObservationSet obs = read_observations_csv(a.observations);

  const ParameterSet init = params_from_spec(tmpl);
  ParameterBounds bounds = ParameterBounds::wide();
  if (!a.freeze.empty()) {
    const Eigen::VectorXd packed = init.pack();
    std::stringstream ss(a.freeze);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto& names = ParameterSet::names();
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end())
        throw InputError("unknown parameter name '" + name + "'");
      const int idx = static_cast<int>(it - names.begin());
      bounds.freeze(idx, packed(idx));
    }
  }

  FitOptions fopts;
  fopts.max_iterations = a.max_iterations;
  const FitResult fit =
      estimate_parameters(tmpl, obs, init, bounds, ExternalLoads{}, fopts);

  json j;
  j["spec"] = tmpl.name;
  j["observations"] = a.observations;
  j["records"] = obs.size();
  j["failed_records"] = fit.failed_records;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["residual_rmse"] = fit.residual_rmse;
  json params;
  params["young_modulus"] = fit.params.young_modulus;
  params["shear_modulus"] = fit.params.shear_modulus;
  params["alignment_x"] = fit.params.alignment_x;
  params["alignment_y"] = fit.params.alignment_y;
  params["turn_area"] = vec_json(fit.params.turn_area);
  params["coil_mass"] = fit.params.coil_mass;
  params["mass_per_length"] = fit.params.mass_per_length;
  j["params"] = params;
  j["packed"] = vecx_json(fit.packed);
  j["confidence"] = vecx_json(fit.confidence);
  j["parameter_names"] = ParameterSet::names();
  write_json_file(out / "fit.json", j);

  std::cout << "E " << fit.params.young_modulus << " N/mm^2, G "
            << fit.params.shear_modulus << " N/mm^2, residual rmse "
            << fit.residual_rmse << " mm in " << fit.iterations
            << " iterations\n";
  if (!fit.converged) {
    std::cerr << json{{"error",
                       {{"type", "non_convergence"},
                        {"message", "fit stopped before convergence"},
                        {"residual_rmse", fit.residual_rmse}}}}
                     .dump()
              << '\n';
    return 4;
  }
  return 0;
}

struct BenchArgs {
  std::string spec = "pebax35";
  std::string out = ".";
  int samples = 100;
  std::uint64_t seed = 42;
  int points = 40;
  double size = 8.0;
};

int cmd_bench(const BenchArgs& a) {
  if (a.samples < 10) throw InputError("need at least 10 benchmark samples");
  if (a.points < 8) throw InputError("a trajectory needs at least 8 waypoints");
  const CatheterSpec spec = resolve_spec(a.spec);
  const fs::path out = prepare_out(a.out);
  const ExternalLoads loads;

  const BenchReport report =
      bench_jacobians(spec, loads, a.samples, a.seed, 0.3);

  const auto summary_json = [](const BenchSummary& s) {
    return json{{"mean_ms", s.mean_ms},
                {"median_ms", s.median_ms},
                {"p95_ms", s.p95_ms}};
  };

  json j;
  j["spec"] = spec.name;
  j["samples"] = report.samples;
  j["seed"] = report.seed;
  j["analytical"] = summary_json(report.analytical);
  j["fd"] = summary_json(report.fd);
  j["speedup_median"] = report.fd.median_ms / report.analytical.median_ms;
  j["max_rel_deviation"] = report.max_rel_deviation;

  json control = json::object();
  for (const char* name : {"circle", "lemniscate", "rectangle", "butterfly"}) {
    const TrajectoryShape shape = shape_from_name(name);
    IkOptions ik;
    PlanOptions plan;
    const TrajectoryFrame frame = plan_trajectory_frame(
        spec, loads, shape_max_radius(shape, a.size), plan);
    const auto waypoints =
        place_samples(frame, shape_samples(shape, a.size, a.points));
    const TrackResult result = track_trajectory(spec, loads, waypoints, ik);
    control[name] = {{"success", result.success},
                     {"rmse_model_vs_desired", result.rmse_model_vs_desired},
                     {"mean_step_ms", result.mean_step_ms},
                     {"p95_step_ms", result.p95_step_ms}};
  }
  j["control"] = control;
  j["paper_reported"] = {{"analytical_jacobian_ms", 2.0},
                         {"fd_jacobian_ms", 5.5},
                         {"control_step_ms", 4.1},
                         {"fd_control_step_ms", 95.0}};
  write_json_file(out / "bench.json", j);

  std::cout << "jacobian median " << report.analytical.median_ms << " ms vs fd "
            << report.fd.median_ms << " ms (x"
            << report.fd.median_ms / report.analytical.median_ms
            << "), max deviation " << report.max_rel_deviation << '\n';
  return 0;
}

int report_error(const char* type, const std::exception& e, int code) {
  json j{{"error", {{"type", type}, {"message", e.what()}}}};
  if (const auto* spec_err = dynamic_cast<const SpecError*>(&e)) {
    json v = json::array();
    for (const auto& violation : spec_err->violations)
      v.push_back({{"field", violation.field}, {"message", violation.message}});
    j["error"]["violations"] = v;
  }
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Magnetic catheter kinematics toolkit"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "Forward boundary solve");
  solve->add_option("--spec", solve_args.spec, "Builtin name or spec JSON path");
  solve->add_option("--out", solve_args.out, "Output directory")
      ->envname("MAGCATH_OUT");
  solve->add_option("--currents", solve_args.currents,
                    "Comma separated coil currents, A");
  solve->add_option("--insert", solve_args.insert,
                    "Inserted length, mm (default full)");
  solve->add_option("--steps-per-mm", solve_args.steps_per_mm,
                    "Integrator resolution");
  solve->add_option("--tol", solve_args.tol, "Residual tolerance, N*mm");
  solve->add_flag("--trace", solve_args.trace, "Write the station trace CSV");
  solve->add_flag("--fd", solve_args.fd, "Finite-difference residual Jacobian");

  TrackArgs track_args;
  auto* track = app.add_subcommand("track", "Track a planar trajectory");
  track->add_option("--spec", track_args.spec, "Builtin name or spec JSON path");
  track->add_option("--out", track_args.out, "Output directory")
      ->envname("MAGCATH_OUT");
  track->add_option("--shape", track_args.shape,
                    "circle|lemniscate|rectangle|butterfly");
  track->add_option("--points", track_args.points, "Waypoint count");
  track->add_option("--size", track_args.size, "Shape size, mm");
  track->add_option("--lambda", track_args.lambda, "Damped least squares lambda");
  track->add_option("--tol", track_args.tol, "Waypoint tolerance, mm");
  track->add_option("--steps-per-mm", track_args.steps_per_mm,
                    "Integrator resolution");
  track->add_option("--seed", track_args.seed, "Recorded run seed");
  track->add_flag("--fd", track_args.fd, "Finite-difference tip Jacobian");

  MetricsArgs metrics_args;
  auto* metrics = app.add_subcommand("metrics", "Trace accuracy metrics");
  metrics->add_option("traces", metrics_args.traces, "Trace CSV files")
      ->required();
  metrics->add_option("--reference", metrics_args.reference,
                      "Reference points CSV");
  metrics->add_option("--mode", metrics_args.mode, "raw|aligned|method2");
  metrics->add_option("--out", metrics_args.out, "Output directory")
      ->envname("MAGCATH_OUT");
  metrics->add_option("--seed", metrics_args.seed,
                      "Reference choice seed for method2");

  EstimateArgs estimate_args;
  auto* estimate = app.add_subcommand("estimate", "Fit catheter parameters");
  estimate->add_option("observations", estimate_args.observations,
                       "Observation CSV")
      ->required();
  estimate->add_option("--spec", estimate_args.spec,
                       "Builtin name or spec JSON path");
  estimate->add_option("--out", estimate_args.out, "Output directory")
      ->envname("MAGCATH_OUT");
  estimate->add_option("--freeze", estimate_args.freeze,
                       "Comma separated parameter names to hold fixed");
  estimate->add_option("--max-iterations", estimate_args.max_iterations,
                       "Iteration cap");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Jacobian and control timing");
  bench->add_option("--spec", bench_args.spec, "Builtin name or spec JSON path");
  bench->add_option("--out", bench_args.out, "Output directory")
      ->envname("MAGCATH_OUT");
  bench->add_option("--samples", bench_args.samples, "Random configurations");
  bench->add_option("--seed", bench_args.seed, "Sample seed");
  bench->add_option("--points", bench_args.points, "Waypoints per shape lap");
  bench->add_option("--size", bench_args.size, "Shape size, mm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(solve)) return cmd_solve(solve_args);
    if (app.got_subcommand(track)) return cmd_track(track_args);
    if (app.got_subcommand(metrics)) return cmd_metrics(metrics_args);
    if (app.got_subcommand(estimate)) return cmd_estimate(estimate_args);
    if (app.got_subcommand(bench)) return cmd_bench(bench_args);
  } catch (const SpecError& e) {
    return report_error("input", e, 2);
  } catch (const InputError& e) {
    return report_error("input", e, 2);
  } catch (const AllRecordsFailedError& e) {
    return report_error("non_convergence", e, 4);
  } catch (const ConvergenceError& e) {
    return report_error("non_convergence", e, 4);
  } catch (const Error& e) {
    return report_error("non_convergence", e, 4);
  } catch (const std::exception& e) {
    return report_error("internal", e, 1);
  }
  return 2;
}

}  // namespace magcath::cli
