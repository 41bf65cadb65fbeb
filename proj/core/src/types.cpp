#include "magcath/types.hpp"

#include <cmath>
#include <sstream>

namespace magcath {

double CatheterSpec::total_length() const {
  double total = 0.0;
  for (const auto& seg : segments) {
    std::visit([&](const auto& s) { total += s.length; }, seg);
  }
  return total;
}

int CatheterSpec::actuator_count() const {
  int n = 0;
  for (const auto& seg : segments) {
    if (const auto* r = std::get_if<RigidSegment>(&seg); r && r->actuator) ++n;
  }
  return n;
}

int CatheterSpec::flexible_count() const {
  int n = 0;
  for (const auto& seg : segments) {
    if (std::holds_alternative<FlexibleSegment>(seg)) ++n;
  }
  return n;
}

std::vector<int> CatheterSpec::actuator_segments() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    if (const auto* r = std::get_if<RigidSegment>(&segments[i]); r && r->actuator) {
      out.push_back(i);
    }
  }
  return out;
}

namespace {

const double kPi = 3.14159265358979323846;

void check(std::vector<Violation>& out, bool ok, const std::string& field,
           const std::string& message) {
  if (!ok) out.push_back({field, message});
}

}  // namespace

std::vector<Violation> validate_spec(const CatheterSpec& spec) {
  std::vector<Violation> v;
  check(v, !spec.segments.empty(), "segments", "segment list is empty");
  check(v, spec.flexible_count() >= 1, "segments",
        "at least one flexible segment is required");
  check(v, spec.inner_radius > 0.0, "inner_radius", "must be positive");
  check(v, spec.outer_radius > spec.inner_radius, "outer_radius",
        "must exceed inner_radius");
  check(v, spec.mass_scale > 0.0, "mass_scale", "must be positive");
  check(v, spec.current_limit > 0.0, "current_limit", "must be positive");
  const double det = spec.base.R.determinant();
  check(v, std::abs(det - 1.0) < 1e-9 &&
               (spec.base.R.transpose() * spec.base.R -
                Eigen::Matrix3d::Identity())
                       .norm() < 1e-9,
        "base_pose.rotation", "must be a rotation matrix");
  for (size_t i = 0; i < spec.segments.size(); ++i) {
    const std::string base = "segments[" + std::to_string(i) + "]";
    std::visit(
        [&](const auto& seg) {
          using T = std::decay_t<decltype(seg)>;
          check(v, seg.length > 0.0, base + ".length", "must be positive");
          if constexpr (std::is_same_v<T, FlexibleSegment>) {
            check(v, (seg.stiffness.array() > 0.0).all(), base + ".stiffness",
                  "diagonal entries must be positive");
            check(v, seg.mass_per_length >= 0.0, base + ".mass_per_length",
                  "must be nonnegative");
          } else {
            if (seg.actuator) {
              check(v, seg.actuator->coil_mass >= 0.0,
                    base + ".actuator.coil_mass", "must be nonnegative");
              check(v,
                    seg.actuator->alignment_x > -kPi &&
                        seg.actuator->alignment_x <= kPi,
                    base + ".actuator.alignment_x", "must lie in (-pi, pi]");
              check(v,
                    seg.actuator->alignment_y > -kPi &&
                        seg.actuator->alignment_y <= kPi,
                    base + ".actuator.alignment_y", "must lie in (-pi, pi]");
            }
          }
        },
        spec.segments[i]);
  }
  return v;
}

void require_valid(const CatheterSpec& spec) {
  auto violations = validate_spec(spec);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invalid catheter spec";
    if (!spec.name.empty()) msg << " '" << spec.name << "'";
    msg << ": " << violations.size() << " violation(s), first: "
        << violations.front().field << " " << violations.front().message;
    throw SpecError(msg.str(), std::move(violations));
  }
}

std::vector<Violation> validate_actuation(const CatheterSpec& spec,
                                          const ActuationInput& input) {
  std::vector<Violation> v;
  const int expected = 3 * spec.actuator_count();
  check(v, input.currents.size() == expected, "currents",
        "expected " + std::to_string(expected) + " entries, got " +
            std::to_string(input.currents.size()));
  for (int i = 0; i < input.currents.size(); ++i) {
    check(v, std::abs(input.currents[i]) <= spec.current_limit,
          "currents[" + std::to_string(i) + "]",
          "magnitude exceeds hardware bound");
  }
  const double total = spec.total_length();
  check(v, input.inserted_length > 0.0 && input.inserted_length <= total,
        "inserted_length", "must lie in (0, total_length]");
  return v;
}

double annulus_second_moment(double inner_radius, double outer_radius) {
  return kPi *
         (std::pow(outer_radius, 4) - std::pow(inner_radius, 4)) / 4.0;
}

Eigen::Vector3d annulus_stiffness(double young_modulus, double shear_modulus,
                                  double inner_radius, double outer_radius) {
  const double I = annulus_second_moment(inner_radius, outer_radius);
  return {young_modulus * I, young_modulus * I, shear_modulus * 2.0 * I};
}

const FlexibleSegment& flexible_at(const CatheterSpec& spec, double s) {
  const double total = spec.total_length();
  if (s < 0.0 || s > total) {
    throw InputError("arclength " + std::to_string(s) + " outside [0, " +
                     std::to_string(total) + "]");
  }
  double s0 = 0.0;
  for (const auto& seg : spec.segments) {
    const double len = std::visit([](const auto& x) { return x.length; }, seg);
    const double s1 = s0 + len;
    const bool contains = (s >= s0 && s < s1) || (s == total && s1 == total);
    if (contains) {
      if (const auto* f = std::get_if<FlexibleSegment>(&seg)) return *f;
      throw InputError("arclength " + std::to_string(s) +
                       " falls inside a rigid segment");
    }
    s0 = s1;
  }
  throw InputError("arclength lookup failed at s=" + std::to_string(s));
}

Eigen::Vector3d stiffness_at(const CatheterSpec& spec, double s) {
  return flexible_at(spec, s).stiffness;
}

Eigen::Vector3d rest_curvature_at(const CatheterSpec& spec, double s) {
  return flexible_at(spec, s).rest_curvature;
}

ActuationInput zero_actuation(const CatheterSpec& spec) {
  ActuationInput input;
  input.currents = Eigen::VectorXd::Zero(3 * spec.actuator_count());
  input.inserted_length = spec.total_length();
  return input;
}

}  // namespace magcath
