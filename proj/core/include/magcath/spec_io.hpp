#pragma once

#include <string>
#include <vector>

#include "magcath/types.hpp"

namespace magcath {

// Built-in parameter sets: "pebax35" and "qosina".
std::vector<std::string> builtin_spec_names();
CatheterSpec builtin_spec(const std::string& name);

// JSON spec file. Unknown keys are rejected at every level; coil alignment
// angles are normalized into (-pi, pi] on load. Throws SpecError / InputError.
CatheterSpec load_spec_file(const std::string& path);
CatheterSpec parse_spec_json(const std::string& text);
// Resolves a builtin name first, then falls back to a file path.
CatheterSpec resolve_spec(const std::string& name_or_path);

std::string spec_to_json(const CatheterSpec& spec);
void save_spec_file(const CatheterSpec& spec, const std::string& path);

}  // namespace magcath
