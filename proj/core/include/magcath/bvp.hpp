#pragma once

#include <Eigen/Dense>

#include "magcath/ivp.hpp"

namespace magcath {

struct SolverOptions {
  double tolerance = 1e-8;  // residual norm, N*mm
  int max_iterations = 50;
  double initial_radius = 1.0;
  double min_radius = 1e-10;
  double max_radius = 1e3;
  double shrink_threshold = 0.25;
  double grow_threshold = 0.75;
  double shrink_factor = 0.25;
  double grow_factor = 2.0;
  // After this many consecutive rejected steps, take one damped
  // Gauss-Newton step unconditionally.
  int max_rejections = 5;
  double fallback_damping = 1e-3;
  double singular_condition = 1e12;
  bool fd_residual_jacobian = false;
  double fd_step = 1e-6;
  IntegratorOptions integrator;
};

struct BvpSolution {
  Eigen::Vector3d u0 = Eigen::Vector3d::Zero();  // converged initial curvature
  IvpResult ivp;                                 // state at u0
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  ActuationInput input;
};

// Moment mismatch at the distal boundary:
// K(tip) (u_tip - u*(tip)) - l_tip.
Eigen::Vector3d boundary_residual(const IvpResult& ivp);

// Residual Jacobian d tau_res / d u0 at the given shooting state.
Eigen::Matrix3d residual_jacobian(const CatheterSpec& spec,
                                  const ExternalLoads& loads,
                                  const ActuationInput& input,
                                  const Eigen::Vector3d& u0,
                                  const SolverOptions& opts = {});

// Powell dogleg step minimizing the Gauss-Newton model of ||r + J d||
// within the trust radius. jac must be invertible.
Eigen::Vector3d dogleg_step(const Eigen::Matrix3d& jac,
                            const Eigen::Vector3d& residual, double radius);

// Damped Gauss-Newton step -(J^T J + damping^2 I)^-1 J^T r.
Eigen::Vector3d damped_gn_step(const Eigen::Matrix3d& jac,
                               const Eigen::Vector3d& residual, double damping);

BvpSolution solve_bvp(const CatheterSpec& spec, const ExternalLoads& loads,
                      const ActuationInput& input, const Eigen::Vector3d& u0_guess,
                      const SolverOptions& opts = {});

}  // namespace magcath
