#include "magcath/spec_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace magcath {

using nlohmann::json;

namespace {

const double kPi = 3.14159265358979323846;

double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw InputError("spec: " + where + " must be an object");
  }
  for (const auto& item : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end()) {
      throw InputError("spec: unknown key '" + item.key() + "' in " + where);
    }
  }
}

double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw InputError("spec: " + where + " must be a number");
  return j.get<double>();
}

Eigen::Vector3d as_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw InputError("spec: " + where + " must be an array of 3 numbers");
  }
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = as_double(j[i], where);
  return v;
}

Eigen::Matrix3d as_mat3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw InputError("spec: " + where + " must be 3 rows of 3 numbers");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) m.row(r) = as_vec3(j[r], where).transpose();
  return m;
}

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::vector<std::string> builtin_spec_names() { return {"pebax35", "qosina"}; }

CatheterSpec builtin_spec(const std::string& name) {
  CatheterSpec spec;
  spec.name = name;
  spec.mass_scale = 1e-3;  // shipped masses are grams
  spec.current_limit = 0.5;

  double young = 0.0, shear = 0.0, rho = 0.0;
  Actuator coil;
  if (name == "pebax35") {
    spec.inner_radius = 0.8;
    spec.outer_radius = 1.3;
    young = 31.03;
    shear = 8.11;
    rho = 5.89e-11;
    coil.turn_area = {-0.43, 0.57, 0.71};
    coil.alignment_x = normalize_angle(3.25);
    coil.alignment_y = 0.06;
    coil.coil_mass = 2.78e-9;
  } else if (name == "qosina") {
    spec.inner_radius = 0.84;
    spec.outer_radius = 1.33;
    young = 14.54;
    shear = 2.82;
    rho = 3.06e-9;
    coil.turn_area = {-0.43, 0.54, 0.48};
    coil.alignment_x = -0.20;
    coil.alignment_y = -0.16;
    coil.coil_mass = 1.64e-7;
  } else {
    throw InputError("unknown builtin spec '" + name + "'");
  }

  const Eigen::Vector3d k =
      annulus_stiffness(young, shear, spec.inner_radius, spec.outer_radius);
  FlexibleSegment proximal{29.0, k, Eigen::Vector3d::Zero(), rho};
  RigidSegment coil_set{13.0, coil};
  FlexibleSegment distal{104.0, k, Eigen::Vector3d::Zero(), rho};
  spec.segments = {proximal, coil_set, distal};
  return spec;
}

CatheterSpec parse_spec_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("spec: JSON parse error: ") + e.what());
  }
  expect_keys(root, "top level",
              {"name", "inner_radius", "outer_radius", "total_length",
               "material", "mass_scale", "current_limit", "base_pose",
               "segments"});

  CatheterSpec spec;
  if (root.contains("name")) {
    if (!root["name"].is_string()) throw InputError("spec: name must be a string");
    spec.name = root["name"].get<std::string>();
  }
  if (!root.contains("inner_radius") || !root.contains("outer_radius")) {
    throw InputError("spec: inner_radius and outer_radius are required");
  }
  spec.inner_radius = as_double(root["inner_radius"], "inner_radius");
  spec.outer_radius = as_double(root["outer_radius"], "outer_radius");
  if (root.contains("mass_scale")) {
    spec.mass_scale = as_double(root["mass_scale"], "mass_scale");
  }
  if (root.contains("current_limit")) {
    spec.current_limit = as_double(root["current_limit"], "current_limit");
  }

  bool have_material = false;
  Eigen::Vector3d material_stiffness = Eigen::Vector3d::Zero();
  if (root.contains("material")) {
    const json& m = root["material"];
    expect_keys(m, "material", {"young_modulus", "shear_modulus"});
    if (!m.contains("young_modulus") || !m.contains("shear_modulus")) {
      throw InputError("spec: material needs young_modulus and shear_modulus");
    }
    material_stiffness = annulus_stiffness(
        as_double(m["young_modulus"], "material.young_modulus"),
        as_double(m["shear_modulus"], "material.shear_modulus"),
        spec.inner_radius, spec.outer_radius);
    have_material = true;
  }

  if (root.contains("base_pose")) {
    const json& b = root["base_pose"];
    expect_keys(b, "base_pose", {"position", "rotation"});
    if (b.contains("position")) {
      spec.base.p = as_vec3(b["position"], "base_pose.position");
    }
    if (b.contains("rotation")) {
      spec.base.R = as_mat3(b["rotation"], "base_pose.rotation");
    }
  }

  if (!root.contains("segments") || !root["segments"].is_array() ||
      root["segments"].empty()) {
    throw InputError("spec: segments must be a nonempty array");
  }
  int idx = 0;
  for (const json& s : root["segments"]) {
    const std::string where = "segments[" + std::to_string(idx) + "]";
    expect_keys(s, where,
                {"type", "length", "stiffness", "rest_curvature",
                 "mass_per_length", "actuator"});
    if (!s.contains("type") || !s["type"].is_string()) {
      throw InputError("spec: " + where + ".type must be a string");
    }
    if (!s.contains("length")) {
      throw InputError("spec: " + where + ".length is required");
    }
    const std::string type = s["type"].get<std::string>();
    const double length = as_double(s["length"], where + ".length");
    if (type == "flexible") {
      if (s.contains("actuator")) {
        throw InputError("spec: " + where + ": flexible segments take no actuator");
      }
      FlexibleSegment f;
      f.length = length;
      if (s.contains("stiffness")) {
        f.stiffness = as_vec3(s["stiffness"], where + ".stiffness");
      } else if (have_material) {
        f.stiffness = material_stiffness;
      } else {
        throw InputError("spec: " + where +
                         " needs stiffness or a top-level material");
      }
      if (s.contains("rest_curvature")) {
        f.rest_curvature = as_vec3(s["rest_curvature"], where + ".rest_curvature");
      }
      if (s.contains("mass_per_length")) {
        f.mass_per_length = as_double(s["mass_per_length"], where + ".mass_per_length");
      }
      spec.segments.emplace_back(f);
    } else if (type == "rigid") {
      for (const char* k : {"stiffness", "rest_curvature", "mass_per_length"}) {
        if (s.contains(k)) {
          throw InputError("spec: " + where + ": rigid segments take no " + k);
        }
      }
      RigidSegment r;
      r.length = length;
      if (s.contains("actuator")) {
        const json& a = s["actuator"];
        expect_keys(a, where + ".actuator",
                    {"turn_area", "alignment_x", "alignment_y", "coil_mass"});
        if (!a.contains("turn_area")) {
          throw InputError("spec: " + where + ".actuator.turn_area is required");
        }
        Actuator act;
        act.turn_area = as_vec3(a["turn_area"], where + ".actuator.turn_area");
        if (a.contains("alignment_x")) {
          act.alignment_x =
              normalize_angle(as_double(a["alignment_x"], where + ".alignment_x"));
        }
        if (a.contains("alignment_y")) {
          act.alignment_y =
              normalize_angle(as_double(a["alignment_y"], where + ".alignment_y"));
        }
        if (a.contains("coil_mass")) {
          act.coil_mass = as_double(a["coil_mass"], where + ".coil_mass");
        }
        r.actuator = act;
      }
      spec.segments.emplace_back(r);
    } else {
      throw InputError("spec: " + where + ".type must be 'flexible' or 'rigid'");
    }
    ++idx;
  }

  if (root.contains("total_length")) {
    const double declared = as_double(root["total_length"], "total_length");
    if (std::abs(declared - spec.total_length()) > 1e-9) {
      throw InputError("spec: total_length " + std::to_string(declared) +
                       " does not match segment sum " +
                       std::to_string(spec.total_length()));
    }
  }

  require_valid(spec);
  return spec;
}

CatheterSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec_json(buf.str());
}

CatheterSpec resolve_spec(const std::string& name_or_path) {
  const auto names = builtin_spec_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return builtin_spec(name_or_path);
  }
  return load_spec_file(name_or_path);
}

std::string spec_to_json(const CatheterSpec& spec) {
  json root;
  root["name"] = spec.name;
  root["inner_radius"] = spec.inner_radius;
  root["outer_radius"] = spec.outer_radius;
  root["total_length"] = spec.total_length();
  root["mass_scale"] = spec.mass_scale;
  root["current_limit"] = spec.current_limit;
  root["base_pose"]["position"] = vec3_to_json(spec.base.p);
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back(json::array({spec.base.R(r, 0), spec.base.R(r, 1), spec.base.R(r, 2)}));
  }
  root["base_pose"]["rotation"] = rot;
  root["segments"] = json::array();
  for (const auto& seg : spec.segments) {
    json s;
    if (const auto* f = std::get_if<FlexibleSegment>(&seg)) {
      s["type"] = "flexible";
      s["length"] = f->length;
      s["stiffness"] = vec3_to_json(f->stiffness);
      s["rest_curvature"] = vec3_to_json(f->rest_curvature);
      s["mass_per_length"] = f->mass_per_length;
    } else {
      const auto& r = std::get<RigidSegment>(seg);
      s["type"] = "rigid";
      s["length"] = r.length;
      if (r.actuator) {
        s["actuator"]["turn_area"] = vec3_to_json(r.actuator->turn_area);
        s["actuator"]["alignment_x"] = r.actuator->alignment_x;
        s["actuator"]["alignment_y"] = r.actuator->alignment_y;
        s["actuator"]["coil_mass"] = r.actuator->coil_mass;
      }
    }
    root["segments"].push_back(s);
  }
  return root.dump(2);
}

void save_spec_file(const CatheterSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write spec file '" + path + "'");
  out << spec_to_json(spec) << "\n";
}

}  // namespace magcath
