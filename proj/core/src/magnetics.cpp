#include "magcath/magnetics.hpp"

#include "magcath/so3.hpp"

namespace magcath {

Eigen::Matrix3d coil_frame(const Actuator& act) {
  return so3::rot_x(act.alignment_x) * so3::rot_y(act.alignment_y);
}

Eigen::Vector3d coil_dipole(const Actuator& act, const Eigen::Vector3d& currents) {
  return coil_frame(act) * (act.turn_area.cwiseProduct(currents));
}

Eigen::Vector3d actuator_moment(const Actuator& act, const Eigen::Matrix3d& R,
                                const Eigen::Vector3d& field,
                                const Eigen::Vector3d& currents) {
  return coil_dipole(act, currents).cross(R.transpose() * field);
}

Eigen::Matrix3d moment_current_jacobian(const Actuator& act,
                                        const Eigen::Matrix3d& R,
                                        const Eigen::Vector3d& field) {
  const Eigen::Vector3d b = R.transpose() * field;
  return -so3::hat(b) * coil_frame(act) * act.turn_area.asDiagonal();
}

Eigen::Vector3d moment_rotation_derivative(const Actuator& act,
                                           const Eigen::Matrix3d& R,
                                           const Eigen::Vector3d& field,
                                           const Eigen::Vector3d& currents,
                                           const Eigen::Vector3d& w) {
  const Eigen::Vector3d dipole = coil_dipole(act, currents);
  return -dipole.cross(R.transpose() * (w.cross(field)));
}

}  // namespace magcath
