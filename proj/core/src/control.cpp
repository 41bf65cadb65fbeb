#include "magcath/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "magcath/errors.hpp"
#include "magcath/metrics.hpp"

namespace magcath {

namespace {

constexpr double kPi = 3.14159265358979323846;

double butterfly_peak() {
  static const double peak = [] {
    double m = 0.0;
    const int n = 200000;
    for (int i = 0; i <= n; ++i) {
      const double th = 2.0 * kPi * i / n;
      m = std::max(m, std::abs(std::exp(std::sin(th)) - 2.0 * std::cos(4.0 * th)));
    }
    return m;
  }();
  return peak;
}

Eigen::Vector2d rectangle_point(double half_side, double t) {
  // Perimeter walk, counterclockwise from the corner (s, s).
  const double side = 2.0 * half_side;
  double local = std::fmod(t, 4.0 * side);
  if (local < 0.0) local += 4.0 * side;
  if (local < side) return {half_side - local, half_side};
  local -= side;
  if (local < side) return {-half_side, half_side - local};
  local -= side;
  if (local < side) return {-half_side + local, -half_side};
  local -= side;
  return {half_side, -half_side + local};
}

}  // namespace

TrajectoryShape shape_from_name(const std::string& name) {
  if (name == "circle") return TrajectoryShape::Circle;
  if (name == "lemniscate") return TrajectoryShape::Lemniscate;
  if (name == "rectangle") return TrajectoryShape::Rectangle;
  if (name == "butterfly") return TrajectoryShape::Butterfly;
  throw InputError("unknown trajectory shape: " + name);
}

std::string shape_name(TrajectoryShape shape) {
  switch (shape) {
    case TrajectoryShape::Circle: return "circle";
    case TrajectoryShape::Lemniscate: return "lemniscate";
    case TrajectoryShape::Rectangle: return "rectangle";
    case TrajectoryShape::Butterfly: return "butterfly";
  }
  throw InputError("unknown trajectory shape");
}

std::vector<Eigen::Vector2d> shape_samples(TrajectoryShape shape, double size,
                                           int count) {
  if (size <= 0.0) throw InputError("shape size must be positive");
  if (count < 1) throw InputError("shape sample count must be positive");
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(count));
  switch (shape) {
    case TrajectoryShape::Circle:
      for (int k = 0; k < count; ++k) {
        const double th = 2.0 * kPi * k / count;
        out.emplace_back(size * std::cos(th), size * std::sin(th));
      }
      break;
    case TrajectoryShape::Lemniscate:
      for (int k = 0; k < count; ++k) {
        const double t = 2.0 * kPi * k / count;
        const double c = std::cos(t);
        const double s = std::sin(t);
        const double d = 1.0 + s * s;
        out.emplace_back(size * c / d, size * s * c / d);
      }
      break;
    case TrajectoryShape::Rectangle: {
      const double perimeter = 8.0 * size;
      for (int k = 0; k < count; ++k)
        out.push_back(rectangle_point(size, perimeter * k / count));
      break;
    }
    case TrajectoryShape::Butterfly: {
      const double scale = size / butterfly_peak();
      for (int k = 0; k < count; ++k) {
        const double th = 2.0 * kPi * k / count;
        const double r = std::exp(std::sin(th)) - 2.0 * std::cos(4.0 * th);
        out.emplace_back(scale * r * std::cos(th), scale * r * std::sin(th));
      }
      break;
    }
  }
  return out;
}

double shape_max_radius(TrajectoryShape shape, double size) {
  if (size <= 0.0) throw InputError("shape size must be positive");
  switch (shape) {
    case TrajectoryShape::Circle: return size;
    case TrajectoryShape::Lemniscate: return size;
    case TrajectoryShape::Rectangle: return size * std::sqrt(2.0);
    case TrajectoryShape::Butterfly: return size;
  }
  throw InputError("unknown trajectory shape");
}

namespace {

struct ProbeResult {
  double radius;
  double height;
};

ProbeResult probe_tip(const CatheterSpec& spec, const ExternalLoads& loads,
                      const Eigen::VectorXd& currents, double inserted,
                      Eigen::Vector3d& warm_u0, const SolverOptions& sopts) {
  ActuationInput in;
  in.currents = currents;
  in.inserted_length = inserted;
  BvpSolution sol = solve_bvp(spec, loads, in, warm_u0, sopts);
  if (!sol.converged)
    throw ConvergenceError("trajectory planning probe did not converge",
                           sol.residual_norm);
  warm_u0 = sol.u0;
  const Eigen::Vector3d local =
      spec.base.R.transpose() * (sol.ivp.tip.p - spec.base.p);
  return {local.head<2>().norm(), local.z()};
}

}  // namespace

TrajectoryFrame plan_trajectory_frame(const CatheterSpec& spec,
                                      const ExternalLoads& loads,
                                      double max_radius,
                                      const PlanOptions& opts) {
  require_valid(spec);
  if (max_radius <= 0.0) throw InputError("trajectory radius must be positive");
  if (opts.probe_azimuths < 1)
    throw InputError("need at least one probe azimuth");

  const int nc = 3 * spec.actuator_count();
  const double full = spec.total_length();
  double plane_z = std::numeric_limits<double>::infinity();
  bool any = false;

  for (int a = 0; a < opts.probe_azimuths; ++a) {
    const double psi = 2.0 * kPi * a / opts.probe_azimuths;
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(nc);
    dir(0) = std::cos(psi);
    dir(1) = std::sin(psi);

    Eigen::Vector3d warm = Eigen::Vector3d::Zero();
    double lo = 0.0;
    double hi = spec.current_limit;
    ProbeResult at_lo = probe_tip(spec, loads, lo * dir, full, warm, opts.solver);
    if (at_lo.radius >= max_radius)
      throw InputError("tip already past the trajectory radius at rest");
    ProbeResult at_hi = probe_tip(spec, loads, hi * dir, full, warm, opts.solver);
    if (at_hi.radius < max_radius) continue;  // direction too weak; skip

    ProbeResult mid_result = at_hi;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      mid_result = probe_tip(spec, loads, mid * dir, full, warm, opts.solver);
      if (std::abs(mid_result.radius - max_radius) < opts.probe_tolerance) break;
      if (mid_result.radius < max_radius)
        lo = mid;
      else
        hi = mid;
    }
    plane_z = std::min(plane_z, mid_result.height);
    any = true;
  }

  if (!any)
    throw InputError(
        "trajectory radius unreachable within the current limits");

  TrajectoryFrame frame;
  frame.orientation = spec.base.R;
  frame.center = spec.base.p + (plane_z - opts.margin) * spec.base.R.col(2);
  return frame;
}

std::vector<Eigen::Vector3d> place_samples(
    const TrajectoryFrame& frame, const std::vector<Eigen::Vector2d>& samples) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(frame.center + frame.orientation *
                                     Eigen::Vector3d(s.x(), s.y(), 0.0));
  return out;
}

Eigen::VectorXd dls_step(const Eigen::Matrix3Xd& jacobian,
                         const Eigen::Vector3d& error, double damping) {
  const Eigen::Matrix3d gram =
      jacobian * jacobian.transpose() +
      damping * damping * Eigen::Matrix3d::Identity();
  if (damping == 0.0) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(gram);
    const auto& sv = svd.singularValues();
    if (sv(2) < 1e-12 * std::max(sv(0), 1e-30))
      throw InputError("dls_step: singular J J^T with zero damping");
  }
  return jacobian.transpose() * gram.ldlt().solve(error);
}

TrackResult track_trajectory(const CatheterSpec& spec,
                             const ExternalLoads& loads,
                             const std::vector<Eigen::Vector3d>& waypoints,
                             const IkOptions& opts) {
  require_valid(spec);
  if (waypoints.empty()) throw InputError("no waypoints to track");
  if (opts.position_tolerance <= 0.0)
    throw InputError("position tolerance must be positive");

  const int nc = 3 * spec.actuator_count();
  const double full = spec.total_length();
  JacobianOptions jopts = opts.jacobian;
  jopts.include_insertion = opts.use_insertion;

  TrackResult result;
  result.steps.reserve(waypoints.size());

  BvpSolution sol = solve_bvp(spec, loads, zero_actuation(spec),
                              Eigen::Vector3d::Zero(), jopts.solver);

  bool aborted = false;
  for (std::size_t w = 0; w < waypoints.size() && !aborted; ++w) {
    const auto t0 = std::chrono::steady_clock::now();
    ControlStepRecord rec;
    rec.waypoint = static_cast<int>(w);
    rec.p_desired = waypoints[w];

    Eigen::Vector3d err = waypoints[w] - sol.ivp.tip.p;
    int it = 0;
    bool converged = sol.converged && err.norm() < opts.position_tolerance;
    while (!converged && it < opts.max_inner_iterations && sol.converged) {
      const BvpJacobian jac = opts.fd_jacobian
                                  ? fd_bvp_jacobian(spec, loads, sol, jopts)
                                  : assemble_bvp_jacobian(spec, loads, sol, jopts);
      Eigen::VectorXd dz = dls_step(jac.position, err, opts.damping);
      for (int i = 0; i < nc; ++i)
        dz(i) = std::clamp(dz(i), -opts.max_current_step, opts.max_current_step);
      if (opts.use_insertion) {
        const int last = static_cast<int>(dz.size()) - 1;
        dz(last) = std::clamp(dz(last), -opts.max_insertion_step,
                              opts.max_insertion_step);
      }

      ActuationInput trial = sol.input;
      trial.currents += dz.head(nc);
      for (int i = 0; i < nc; ++i)
        trial.currents(i) = std::clamp(trial.currents(i), -spec.current_limit,
                                       spec.current_limit);
      if (opts.use_insertion)
        trial.inserted_length =
            std::clamp(trial.inserted_length + dz(dz.size() - 1),
                       opts.min_insertion, full);

      sol = solve_bvp(spec, loads, trial, sol.u0, jopts.solver);
      ++it;
      err = waypoints[w] - sol.ivp.tip.p;
      converged = sol.converged && err.norm() < opts.position_tolerance;
    }

    rec.p_model = sol.ivp.tip.p;
    rec.currents = sol.input.currents;
    rec.inserted_length = sol.input.inserted_length;
    rec.u0 = sol.u0;
    rec.position_error = err.norm();
    rec.inner_iterations = it;
    rec.converged = converged;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.steps.push_back(rec);

    if (!converged &&
        (!sol.converged ||
         err.norm() > opts.giveup_factor * opts.position_tolerance)) {
      result.failed_waypoint = static_cast<int>(w);
      aborted = true;
    }
  }

  result.success = !aborted &&
                   std::all_of(result.steps.begin(), result.steps.end(),
                               [](const ControlStepRecord& r) { return r.converged; });

  PointSet model, desired;
  std::vector<double> times;
  for (const auto& r : result.steps) {
    model.push_back(r.p_model);
    desired.push_back(r.p_desired);
    times.push_back(r.wall_ms);
  }
  if (!result.steps.empty()) {
    result.rmse_model_vs_desired = rmse(model, desired);
    const BenchSummary t = summarize_times(times);
    result.mean_step_ms = t.mean_ms;
    result.p95_step_ms = t.p95_ms;
  }
  return result;
}

}  // namespace magcath
