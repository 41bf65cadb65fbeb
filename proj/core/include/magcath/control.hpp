#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "magcath/bvp.hpp"
#include "magcath/jacobians.hpp"

namespace magcath {

enum class TrajectoryShape { Circle, Lemniscate, Rectangle, Butterfly };

TrajectoryShape shape_from_name(const std::string& name);
std::string shape_name(TrajectoryShape shape);

// Planar sample points in shape-local coordinates, in traversal order.
// size is the peak radial extent except for Rectangle, where it is the
// half side length (corners reach size*sqrt(2)).
std::vector<Eigen::Vector2d> shape_samples(TrajectoryShape shape, double size,
                                           int count);

// Largest distance of any shape point from the local origin.
double shape_max_radius(TrajectoryShape shape, double size);

struct TrajectoryFrame {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
};

struct PlanOptions {
  int probe_azimuths = 8;
  double margin = 0.05;           // mm pulled below the probed plane
  double probe_tolerance = 1e-4;  // mm tolerance on the radius bisection
  SolverOptions solver;
};

// Places the trajectory plane normal to the base axis at a height the tip can
// reach at every sample radius with currents alone; radial excess is then
// absorbed by retraction during tracking. Throws InputError when max_radius
// exceeds what the current limits allow.
TrajectoryFrame plan_trajectory_frame(const CatheterSpec& spec,
                                      const ExternalLoads& loads,
                                      double max_radius,
                                      const PlanOptions& opts = {});

std::vector<Eigen::Vector3d> place_samples(
    const TrajectoryFrame& frame, const std::vector<Eigen::Vector2d>& samples);

struct IkOptions {
  double damping = 0.1;              // damped least squares lambda
  double position_tolerance = 1e-3;  // mm
  int max_inner_iterations = 20;
  double max_current_step = 0.05;    // A per inner update
  double max_insertion_step = 1.0;   // mm per inner update
  double giveup_factor = 10.0;  // error above factor*tolerance at cap -> abort
  bool use_insertion = true;
  double min_insertion = 1.0;  // mm of catheter kept past the entry point
  bool fd_jacobian = false;    // use the re-solve FD Jacobian instead
  JacobianOptions jacobian;
};

// dz = J^T (J J^T + damping^2 I)^-1 error. Throws InputError when damping is
// zero and J J^T is singular.
Eigen::VectorXd dls_step(const Eigen::Matrix3Xd& jacobian,
                         const Eigen::Vector3d& error, double damping);

struct ControlStepRecord {
  int waypoint = 0;
  Eigen::Vector3d p_desired = Eigen::Vector3d::Zero();
  Eigen::Vector3d p_model = Eigen::Vector3d::Zero();
  Eigen::VectorXd currents;
  double inserted_length = 0.0;
  Eigen::Vector3d u0 = Eigen::Vector3d::Zero();  // converged base curvature
  double position_error = 0.0;
  int inner_iterations = 0;
  bool converged = false;
  double wall_ms = 0.0;
};

struct TrackResult {
  std::vector<ControlStepRecord> steps;
  bool success = false;
  int failed_waypoint = -1;
  double rmse_model_vs_desired = 0.0;
  double mean_step_ms = 0.0;
  double p95_step_ms = 0.0;
};

// Open-loop tracking: per waypoint, iterate damped least squares updates on
// coil currents (and insertion when enabled) against the model-predicted tip.
TrackResult track_trajectory(const CatheterSpec& spec,
                             const ExternalLoads& loads,
                             const std::vector<Eigen::Vector3d>& waypoints,
                             const IkOptions& opts = {});

}  // namespace magcath
