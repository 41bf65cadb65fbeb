#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "magcath/param_layout.hpp"
#include "magcath/types.hpp"

namespace magcath {

struct IntegratorOptions {
  double steps_per_mm = 4.0;
  bool record_trace = false;
};

// Sensitivities of the tip state with respect to the ParamLayout columns.
// w holds the virtual angular velocity of the tip frame per column,
// d R_tip = w^ R_tip.
struct TipDerivatives {
  Eigen::Matrix3Xd dp;
  Eigen::Matrix3Xd du;
  Eigen::Matrix3Xd w;
  Eigen::Matrix3Xd dl_tip;
};

struct IvpResult {
  RodState tip;
  // Boundary moment applied by a terminal actuator, zero otherwise.
  Eigen::Vector3d l_tip = Eigen::Vector3d::Zero();
  bool tip_actuated = false;
  // Stiffness and rest curvature governing the distal boundary condition.
  Eigen::Vector3d tip_stiffness = Eigen::Vector3d::Ones();
  Eigen::Vector3d tip_rest_curvature = Eigen::Vector3d::Zero();
  std::optional<TipDerivatives> derivs;
  std::vector<RodState> trace;
};

// Curvature equation right-hand side on a flexible segment:
// du/ds = -K^-1 ( u x K(u - u*) + e3^ R^T f_cum + R^T l ).
Eigen::Vector3d curvature_rhs(const Eigen::Vector3d& stiffness,
                              const Eigen::Vector3d& rest_curvature,
                              const Eigen::Matrix3d& R, const Eigen::Vector3d& u,
                              const Eigen::Vector3d& f_cum,
                              const Eigen::Vector3d& moment_density);

// Derivative of curvature_rhs in u: K^-1 [ (Ku)^ - (Ku*)^ - u^ K ].
Eigen::Matrix3d curvature_state_jacobian(const Eigen::Vector3d& stiffness,
                                         const Eigen::Vector3d& rest_curvature,
                                         const Eigen::Vector3d& u);

// Curvature map across a rigid segment with applied moment tau:
// u+ = u*_+ + K+^-1 ( K-(u - u*_-) - tau ).
Eigen::Vector3d rigid_curvature_transfer(const Eigen::Vector3d& k_minus,
                                         const Eigen::Vector3d& ustar_minus,
                                         const Eigen::Vector3d& k_plus,
                                         const Eigen::Vector3d& ustar_plus,
                                         const Eigen::Vector3d& u,
                                         const Eigen::Vector3d& tau);

// Force carried by the cross-section at rod coordinate s (everything distal:
// tip force, distributed weight, coil weights). s runs from the insertion
// point (0) to the inserted length.
Eigen::Vector3d f_cumulative(const CatheterSpec& spec, const ExternalLoads& loads,
                             double inserted_length, double s);

// Integrates the rod state from the insertion point to the tip. The active
// region is the distal window of the catheter: material [L - z^l, L] with the
// base pose applied at the insertion point. When layout is given, the
// corresponding sensitivity blocks are propagated alongside the state.
IvpResult integrate_ivp(const CatheterSpec& spec, const ExternalLoads& loads,
                        const ActuationInput& input, const Eigen::Vector3d& u0,
                        const IntegratorOptions& opts = {},
                        const ParamLayout* layout = nullptr);

}  // namespace magcath
