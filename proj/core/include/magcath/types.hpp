#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "magcath/errors.hpp"

// Unit system: lengths mm, forces N, moments N*mm, stiffness N*mm^2,
// curvature 1/mm, currents A, field T, angles rad. Masses are stored in the
// unit the spec file declares via mass_scale (scale to kg); gravity is an
// acceleration in mm/s^2. 1 kg*mm/s^2 = 1e-3 N.

namespace magcath {

inline constexpr double kNewtonPerKgMmS2 = 1e-3;

struct RodState {
  double s = 0.0;  // arclength from the insertion point, mm
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
};

struct FlexibleSegment {
  double length = 0.0;
  // Diagonal of K = diag(EI, EI, GJ), N*mm^2.
  Eigen::Vector3d stiffness = Eigen::Vector3d::Zero();
  Eigen::Vector3d rest_curvature = Eigen::Vector3d::Zero();
  double mass_per_length = 0.0;  // in file units, scaled by mass_scale
};

// One coil set: axial coil plus two side coils. turn_area holds the signed
// effective turns*area of each coil; the applied moment is
// (Rc * diag(turn_area) * currents) x (R^T * field) with Rc the coil-frame
// alignment rotation rot_x(alignment_x) * rot_y(alignment_y).
struct Actuator {
  Eigen::Vector3d turn_area = Eigen::Vector3d::Zero();
  double alignment_x = 0.0;
  double alignment_y = 0.0;
  double coil_mass = 0.0;  // in file units, scaled by mass_scale
};

struct RigidSegment {
  double length = 0.0;
  std::optional<Actuator> actuator;
};

using Segment = std::variant<FlexibleSegment, RigidSegment>;

struct BasePose {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
};

struct CatheterSpec {
  std::string name;
  double inner_radius = 0.0;
  double outer_radius = 0.0;
  std::vector<Segment> segments;
  BasePose base;
  double mass_scale = 1.0;    // multiplies masses to yield kg
  double current_limit = 0.5;  // hardware bound per coil, A

  double total_length() const;
  int actuator_count() const;
  int flexible_count() const;
  // Indices into segments of each rigid segment carrying an actuator, in order.
  std::vector<int> actuator_segments() const;
};

struct ExternalLoads {
  Eigen::Vector3d f_tip = Eigen::Vector3d::Zero();          // N
  Eigen::Vector3d gravity = Eigen::Vector3d::Zero();        // mm/s^2
  Eigen::Vector3d moment_density = Eigen::Vector3d::Zero();  // N*mm per mm
  Eigen::Vector3d field = Eigen::Vector3d(0.0, 0.0, 3.0);   // B_s, T
};

struct ActuationInput {
  Eigen::VectorXd currents;       // 3 per actuator, A
  double inserted_length = 0.0;   // mm

  Eigen::Vector3d coil_currents(int actuator_index) const {
    return currents.segment<3>(3 * actuator_index);
  }
};

struct Violation {
  std::string field;
  std::string message;
};

struct SpecError : InputError {
  SpecError(const std::string& what, std::vector<Violation> v)
      : InputError(what), violations(std::move(v)) {}
  std::vector<Violation> violations;
};

std::vector<Violation> validate_spec(const CatheterSpec& spec);
// Throws SpecError if validate_spec reports anything.
void require_valid(const CatheterSpec& spec);

std::vector<Violation> validate_actuation(const CatheterSpec& spec,
                                          const ActuationInput& input);

// Second moment of area of an annulus, pi*(ro^4 - ri^4)/4.
double annulus_second_moment(double inner_radius, double outer_radius);
// diag(E*I, E*I, G*J) with J = 2*I.
Eigen::Vector3d annulus_stiffness(double young_modulus, double shear_modulus,
                                  double inner_radius, double outer_radius);

// Material arclength lookups, s in [0, total_length]. Segment intervals are
// half open [s0, s1); s == total_length maps to the last segment. Throws
// InputError for s outside the rod or inside a rigid segment.
const FlexibleSegment& flexible_at(const CatheterSpec& spec, double s);
Eigen::Vector3d stiffness_at(const CatheterSpec& spec, double s);
Eigen::Vector3d rest_curvature_at(const CatheterSpec& spec, double s);

ActuationInput zero_actuation(const CatheterSpec& spec);

}  // namespace magcath
