#include "magcath/jacobians.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "magcath/so3.hpp"

namespace magcath {

namespace {

std::vector<std::string> current_labels(int n_actuators) {
  std::vector<std::string> labels;
  for (int a = 0; a < n_actuators; ++a) {
    for (int i = 1; i <= 3; ++i) {
      std::string label = "i" + std::to_string(i);
      if (n_actuators > 1) label = "a" + std::to_string(a + 1) + "_" + label;
      labels.push_back(label);
    }
  }
  return labels;
}

BvpSolution resolve_at(const CatheterSpec& spec, const ExternalLoads& loads,
                       ActuationInput input, const Eigen::Vector3d& warm_u0,
                       const SolverOptions& solver) {
  BvpSolution sol = solve_bvp(spec, loads, input, warm_u0, solver);
  if (!sol.converged) {
    throw ConvergenceError("perturbed boundary solve did not converge",
                           sol.residual_norm);
  }
  return sol;
}

struct TipSample {
  Eigen::Vector3d p;
  Eigen::Matrix3d R;
  Eigen::Vector3d u;
  Eigen::Vector3d u0;
};

TipSample sample_of(const BvpSolution& sol) {
  return {sol.ivp.tip.p, sol.ivp.tip.R, sol.ivp.tip.u, sol.u0};
}

// Fills one Jacobian column by differencing re-solves along the given input
// direction. Uses a central stencil when the perturbed input stays feasible,
// otherwise a second-order backward stencil anchored at the base solution.
void fill_fd_column(const CatheterSpec& spec, const ExternalLoads& loads,
                    const BvpSolution& sol, const JacobianOptions& opts,
                    bool is_insertion, int current_index, double h,
                    BvpJacobian& out, int col) {
  auto perturbed = [&](double delta) {
    ActuationInput input = sol.input;
    if (is_insertion) {
      input.inserted_length += delta;
    } else {
      input.currents[current_index] += delta;
    }
    return sample_of(resolve_at(spec, loads, input, sol.u0, opts.solver));
  };

  const double total = spec.total_length();
  const bool central =
      !is_insertion || sol.input.inserted_length + h <= total + 1e-12;
  if (central) {
    const TipSample plus = perturbed(h);
    const TipSample minus = perturbed(-h);
    out.position.col(col) = (plus.p - minus.p) / (2.0 * h);
    out.curvature.col(col) = (plus.u - minus.u) / (2.0 * h);
    out.du0_dz.col(col) = (plus.u0 - minus.u0) / (2.0 * h);
    const Eigen::Matrix3d r0t = sol.ivp.tip.R.transpose();
    out.rotation.col(col) =
        (so3::log(plus.R * r0t) - so3::log(minus.R * r0t)) / (2.0 * h);
  } else {
    const TipSample m1 = perturbed(-h);
    const TipSample m2 = perturbed(-2.0 * h);
    const TipSample base = sample_of(sol);
    out.position.col(col) =
        (3.0 * base.p - 4.0 * m1.p + m2.p) / (2.0 * h);
    out.curvature.col(col) =
        (3.0 * base.u - 4.0 * m1.u + m2.u) / (2.0 * h);
    out.du0_dz.col(col) =
        (3.0 * base.u0 - 4.0 * m1.u0 + m2.u0) / (2.0 * h);
    const Eigen::Matrix3d r0t = sol.ivp.tip.R.transpose();
    out.rotation.col(col) =
        (-4.0 * so3::log(m1.R * r0t) + so3::log(m2.R * r0t)) / (2.0 * h);
  }
  out.fd_column[col] = true;
}

}  // namespace

BvpJacobian assemble_bvp_jacobian(const CatheterSpec& spec,
                                  const ExternalLoads& loads,
                                  const BvpSolution& sol,
                                  const JacobianOptions& opts) {
  if (!sol.converged) {
    throw InputError("jacobian assembly requires a converged solution");
  }
  const int n_act = spec.actuator_count();
  const int n_cur = 3 * n_act;
  const int n_z = n_cur + (opts.include_insertion ? 1 : 0);

  BvpJacobian jac;
  jac.position.setZero(3, n_z);
  jac.rotation.setZero(3, n_z);
  jac.curvature.setZero(3, n_z);
  jac.du0_dz.setZero(3, n_z);
  jac.column_labels = current_labels(n_act);
  if (opts.include_insertion) jac.column_labels.push_back("insert");
  jac.fd_column.assign(n_z, false);

  if (n_cur > 0) {
    ParamLayout layout;
    layout.n_actuators = n_act;
    layout.currents = true;
    layout.u0 = true;
    const IvpResult ivp = integrate_ivp(spec, loads, sol.input, sol.u0,
                                        opts.solver.integrator, &layout);
    const auto& d = *ivp.derivs;
    const int uoff = layout.u0_offset();

    // d res / d u0 and d res / d currents at the solution.
    Eigen::Matrix3d res_u0;
    for (int i = 0; i < 3; ++i) {
      res_u0.col(i) =
          ivp.tip_stiffness.cwiseProduct(d.du.col(uoff + i)) -
          d.dl_tip.col(uoff + i);
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        res_u0, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cond = sv[2] > 0.0 ? sv[0] / sv[2]
                                    : std::numeric_limits<double>::infinity();
    if (cond > opts.solver.singular_condition) {
      throw SingularJacobianError("boundary Jacobian is singular", cond);
    }

    Eigen::MatrixXd res_z(3, n_cur);
    for (int j = 0; j < n_cur; ++j) {
      res_z.col(j) = ivp.tip_stiffness.cwiseProduct(d.du.col(j)) -
                     d.dl_tip.col(j);
    }
    const Eigen::MatrixXd du0_dz = -svd.solve(res_z);

    jac.du0_dz.leftCols(n_cur) = du0_dz;
    jac.position.leftCols(n_cur) =
        d.dp.leftCols(n_cur) + d.dp.middleCols(uoff, 3) * du0_dz;
    jac.rotation.leftCols(n_cur) =
        d.w.leftCols(n_cur) + d.w.middleCols(uoff, 3) * du0_dz;
    jac.curvature.leftCols(n_cur) =
        d.du.leftCols(n_cur) + d.du.middleCols(uoff, 3) * du0_dz;
  }

  if (opts.include_insertion) {
    fill_fd_column(spec, loads, sol, opts, true, -1, opts.fd_insertion_step,
                   jac, n_z - 1);
  }
  return jac;
}

BvpJacobian fd_bvp_jacobian(const CatheterSpec& spec, const ExternalLoads& loads,
                            const BvpSolution& sol, const JacobianOptions& opts) {
  if (!sol.converged) {
    throw InputError("jacobian differencing requires a converged solution");
  }
  const int n_act = spec.actuator_count();
  const int n_cur = 3 * n_act;
  const int n_z = n_cur + (opts.include_insertion ? 1 : 0);

  BvpJacobian jac;
  jac.position.setZero(3, n_z);
  jac.rotation.setZero(3, n_z);
  jac.curvature.setZero(3, n_z);
  jac.du0_dz.setZero(3, n_z);
  jac.column_labels = current_labels(n_act);
  if (opts.include_insertion) jac.column_labels.push_back("insert");
  jac.fd_column.assign(n_z, false);

  for (int j = 0; j < n_cur; ++j) {
    fill_fd_column(spec, loads, sol, opts, false, j, opts.fd_current_step, jac,
                   j);
  }
  if (opts.include_insertion) {
    fill_fd_column(spec, loads, sol, opts, true, -1, opts.fd_insertion_step,
                   jac, n_z - 1);
  }
  return jac;
}

BenchSummary summarize_times(std::vector<double> ms) {
  BenchSummary out;
  if (ms.empty()) return out;
  std::sort(ms.begin(), ms.end());
  double sum = 0.0;
  for (double v : ms) sum += v;
  out.mean_ms = sum / static_cast<double>(ms.size());
  const size_t n = ms.size();
  out.median_ms = (n % 2 == 1) ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  const size_t p95 =
      std::min(n - 1, static_cast<size_t>(std::ceil(0.95 * n)) - 1);
  out.p95_ms = ms[p95];
  return out;
}

BenchReport bench_jacobians(const CatheterSpec& spec, const ExternalLoads& loads,
                            int samples, std::uint64_t seed,
                            double current_range, const JacobianOptions& opts) {
  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.samples = samples;
  report.seed = seed;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> draw(-current_range, current_range);

  Eigen::Vector3d warm = Eigen::Vector3d::Zero();
  double max_dev = 0.0;
  for (int s = 0; s < samples; ++s) {
    ActuationInput input = zero_actuation(spec);
    for (int i = 0; i < input.currents.size(); ++i) input.currents[i] = draw(rng);

    BvpSolution sol = solve_bvp(spec, loads, input, warm, opts.solver);
    if (!sol.converged) {
      throw ConvergenceError("benchmark sample did not converge",
                             sol.residual_norm);
    }
    warm = sol.u0;

    const auto t0 = clock::now();
    const BvpJacobian analytical = assemble_bvp_jacobian(spec, loads, sol, opts);
    const auto t1 = clock::now();
    const BvpJacobian fd = fd_bvp_jacobian(spec, loads, sol, opts);
    const auto t2 = clock::now();

    report.analytical_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
    report.fd_ms.push_back(
        std::chrono::duration<double, std::milli>(t2 - t1).count());

    for (int c = 0; c < analytical.cols(); ++c) {
      for (int r = 0; r < 3; ++r) {
        const double a = analytical.position(r, c);
        const double f = fd.position(r, c);
        const double dev = std::abs(a - f) / std::max(std::abs(f), 1e-8);
        max_dev = std::max(max_dev, dev);
      }
    }
  }
  report.analytical = summarize_times(report.analytical_ms);
  report.fd = summarize_times(report.fd_ms);
  report.max_rel_deviation = max_dev;
  return report;
}

}  // namespace magcath
