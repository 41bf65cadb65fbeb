#pragma once

#include <Eigen/Dense>
#include <vector>

namespace magcath {

using PointSet = std::vector<Eigen::Vector3d>;

// Root mean square of pointwise distances. Sets must match in size.
double rmse(const PointSet& a, const PointSet& b);

struct Alignment {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double rmse = 0.0;
};

// Rigid transform (rotation + translation, no scaling) minimizing the rms
// distance of a mapped onto b. Reflections are excluded; degenerate-rank
// inputs fall back to the identity rotation with centroid matching.
Alignment procrustes_align(const PointSet& a, const PointSet& b);

double aligned_rmse(const PointSet& a, const PointSet& b);

}  // namespace magcath
