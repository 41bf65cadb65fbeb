#include "magcath/bvp.hpp"

#include <cmath>
#include <limits>

namespace magcath {

Eigen::Vector3d boundary_residual(const IvpResult& ivp) {
  return ivp.tip_stiffness.cwiseProduct(ivp.tip.u - ivp.tip_rest_curvature) -
         ivp.l_tip;
}

Eigen::Matrix3d residual_jacobian(const CatheterSpec& spec,
                                  const ExternalLoads& loads,
                                  const ActuationInput& input,
                                  const Eigen::Vector3d& u0,
                                  const SolverOptions& opts) {
  Eigen::Matrix3d jac;
  if (opts.fd_residual_jacobian) {
    const double h = opts.fd_step;
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d up = u0, dn = u0;
      up[i] += h;
      dn[i] -= h;
      const Eigen::Vector3d rp = boundary_residual(
          integrate_ivp(spec, loads, input, up, opts.integrator));
      const Eigen::Vector3d rn = boundary_residual(
          integrate_ivp(spec, loads, input, dn, opts.integrator));
      jac.col(i) = (rp - rn) / (2.0 * h);
    }
    return jac;
  }
  ParamLayout layout;
  layout.n_actuators = spec.actuator_count();
  layout.currents = false;
  layout.u0 = true;
  const IvpResult ivp =
      integrate_ivp(spec, loads, input, u0, opts.integrator, &layout);
  const int off = layout.u0_offset();
  for (int i = 0; i < 3; ++i) {
    jac.col(i) =
        ivp.tip_stiffness.cwiseProduct(ivp.derivs->du.col(off + i)) -
        ivp.derivs->dl_tip.col(off + i);
  }
  return jac;
}

Eigen::Vector3d dogleg_step(const Eigen::Matrix3d& jac,
                            const Eigen::Vector3d& residual, double radius) {
  const Eigen::Vector3d gauss_newton = -jac.fullPivLu().solve(residual);
  if (gauss_newton.norm() <= radius) return gauss_newton;

  const Eigen::Vector3d grad = jac.transpose() * residual;
  const double jg2 = (jac * grad).squaredNorm();
  if (jg2 <= 0.0) return -radius * grad.normalized();
  const Eigen::Vector3d cauchy = -(grad.squaredNorm() / jg2) * grad;
  if (cauchy.norm() >= radius) return radius * cauchy.normalized();

  // Blend along the dogleg path so that ||cauchy + beta (gn - cauchy)|| = radius.
  const Eigen::Vector3d leg = gauss_newton - cauchy;
  const double a = leg.squaredNorm();
  const double b = 2.0 * cauchy.dot(leg);
  const double c = cauchy.squaredNorm() - radius * radius;
  const double disc = std::max(0.0, b * b - 4.0 * a * c);
  const double beta = (-b + std::sqrt(disc)) / (2.0 * a);
  return cauchy + beta * leg;
}

Eigen::Vector3d damped_gn_step(const Eigen::Matrix3d& jac,
                               const Eigen::Vector3d& residual, double damping) {
  const Eigen::Matrix3d m =
      jac.transpose() * jac + damping * damping * Eigen::Matrix3d::Identity();
  return -m.ldlt().solve(jac.transpose() * residual);
}

namespace {

double condition_number(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
  const auto& sv = svd.singularValues();
  if (sv[2] <= 0.0) return std::numeric_limits<double>::infinity();
  return sv[0] / sv[2];
}

}  // namespace

BvpSolution solve_bvp(const CatheterSpec& spec, const ExternalLoads& loads,
                      const ActuationInput& input, const Eigen::Vector3d& u0_guess,
                      const SolverOptions& opts) {
  BvpSolution sol;
  sol.input = input;
  sol.u0 = u0_guess;
  sol.ivp = integrate_ivp(spec, loads, input, sol.u0, opts.integrator);
  Eigen::Vector3d residual = boundary_residual(sol.ivp);
  sol.residual_norm = residual.norm();

  Eigen::Vector3d best_u0 = sol.u0;
  double best_norm = sol.residual_norm;

  double radius = opts.initial_radius;
  int rejects = 0;
  while (sol.iterations < opts.max_iterations) {
    if (sol.residual_norm < opts.tolerance) {
      sol.converged = true;
      return sol;
    }
    ++sol.iterations;

    const Eigen::Matrix3d jac =
        residual_jacobian(spec, loads, input, sol.u0, opts);
    if (!jac.allFinite()) {
      throw NonFiniteError("boundary Jacobian is not finite");
    }

    Eigen::Vector3d step;
    bool forced = false;
    if (rejects >= opts.max_rejections) {
      step = damped_gn_step(jac, residual, opts.fallback_damping);
      forced = true;
    } else if (condition_number(jac) > opts.singular_condition) {
      step = damped_gn_step(jac, residual, opts.fallback_damping);
      if (step.norm() > radius) step *= radius / step.norm();
    } else {
      step = dogleg_step(jac, residual, radius);
    }

    const Eigen::Vector3d trial_u0 = sol.u0 + step;
    IvpResult trial_ivp;
    double trial_norm = std::numeric_limits<double>::infinity();
    Eigen::Vector3d trial_residual = residual;
    bool trial_ok = false;
    try {
      trial_ivp = integrate_ivp(spec, loads, input, trial_u0, opts.integrator);
      trial_residual = boundary_residual(trial_ivp);
      trial_norm = trial_residual.norm();
      trial_ok = std::isfinite(trial_norm);
    } catch (const NonFiniteError&) {
      trial_ok = false;
    }

    if (forced) {
      // Unconditional escape step after a run of rejections.
      if (trial_ok) {
        sol.u0 = trial_u0;
        sol.ivp = std::move(trial_ivp);
        residual = trial_residual;
        sol.residual_norm = trial_norm;
      }
      rejects = 0;
      continue;
    }

    const double actual =
        sol.residual_norm * sol.residual_norm - trial_norm * trial_norm;
    const double predicted =
        sol.residual_norm * sol.residual_norm -
        (residual + jac * step).squaredNorm();
    const double ratio =
        predicted > 0.0 ? actual / predicted
                        : (actual > 0.0 ? 1.0 : -1.0);

    if (ratio < opts.shrink_threshold) {
      radius = std::max(opts.min_radius, radius * opts.shrink_factor);
    } else if (ratio > opts.grow_threshold &&
               step.norm() >= 0.99 * radius) {
      radius = std::min(opts.max_radius, radius * opts.grow_factor);
    }

    if (trial_ok && actual > 0.0) {
      sol.u0 = trial_u0;
      sol.ivp = std::move(trial_ivp);
      residual = trial_residual;
      sol.residual_norm = trial_norm;
      rejects = 0;
      if (sol.residual_norm < best_norm) {
        best_norm = sol.residual_norm;
        best_u0 = sol.u0;
      }
    } else {
      ++rejects;
    }
  }

  if (sol.residual_norm < opts.tolerance) {
    sol.converged = true;
    return sol;
  }
  // Out of iterations: report the best iterate seen.
  if (best_norm < sol.residual_norm) {
    sol.u0 = best_u0;
    sol.ivp = integrate_ivp(spec, loads, input, sol.u0, opts.integrator);
    sol.residual_norm = boundary_residual(sol.ivp).norm();
  }
  sol.converged = sol.residual_norm < opts.tolerance;
  return sol;
}

}  // namespace magcath
