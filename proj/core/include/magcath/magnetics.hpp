#pragma once

#include <Eigen/Dense>

#include "magcath/types.hpp"

namespace magcath {

// Coil frame alignment Rc = rot_x(alignment_x) * rot_y(alignment_y).
Eigen::Matrix3d coil_frame(const Actuator& act);

// Net dipole strength vector in the body frame, Rc * diag(turn_area) * currents.
Eigen::Vector3d coil_dipole(const Actuator& act, const Eigen::Vector3d& currents);

// Body-frame moment tau = dipole x (R^T * field), N*mm.
Eigen::Vector3d actuator_moment(const Actuator& act, const Eigen::Matrix3d& R,
                                const Eigen::Vector3d& field,
                                const Eigen::Vector3d& currents);

// d tau / d currents = -(R^T field)^ * Rc * diag(turn_area), 3x3.
Eigen::Matrix3d moment_current_jacobian(const Actuator& act,
                                        const Eigen::Matrix3d& R,
                                        const Eigen::Vector3d& field);

// Directional derivative of tau along a virtual angular velocity w acting on
// the body frame, dR = w^ R: -(dipole)^ R^T w^ field.
Eigen::Vector3d moment_rotation_derivative(const Actuator& act,
                                           const Eigen::Matrix3d& R,
                                           const Eigen::Vector3d& field,
                                           const Eigen::Vector3d& currents,
                                           const Eigen::Vector3d& w);

}  // namespace magcath
