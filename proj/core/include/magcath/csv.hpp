#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "magcath/types.hpp"

namespace magcath {

// Schema: index,px,py,pz.
void write_points_csv(const std::string& path,
                      const std::vector<Eigen::Vector3d>& points);
std::vector<Eigen::Vector3d> read_points_csv(const std::string& path);

// Schema: s,px,py,pz,ux,uy,uz,r11..r33 (rotation in row-major order).
void write_trace_csv(const std::string& path,
                     const std::vector<RodState>& trace);

}  // namespace magcath
