#include "magcath/metrics.hpp"

#include <cmath>

#include "magcath/errors.hpp"

namespace magcath {

double rmse(const PointSet& a, const PointSet& b) {
  if (a.size() != b.size())
    throw InputError("rmse: point sets differ in size");
  if (a.empty()) throw InputError("rmse: empty point sets");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += (a[i] - b[i]).squaredNorm();
  return std::sqrt(acc / static_cast<double>(a.size()));
}

Alignment procrustes_align(const PointSet& a, const PointSet& b) {
  if (a.size() != b.size())
    throw InputError("procrustes_align: point sets differ in size");
  if (a.empty()) throw InputError("procrustes_align: empty point sets");
  const auto n = static_cast<double>(a.size());

  Eigen::Vector3d ca = Eigen::Vector3d::Zero();
  Eigen::Vector3d cb = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= n;
  cb /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i)
    h += (a[i] - ca) * (b[i] - cb).transpose();

  Alignment out;
  if (h.norm() < 1e-14) {
    out.R = Eigen::Matrix3d::Identity();
  } else {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0)
                  ? -1.0
                  : 1.0;
    out.R = svd.matrixV() * d * svd.matrixU().transpose();
  }
  out.t = cb - out.R * ca;

  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += (out.R * a[i] + out.t - b[i]).squaredNorm();
  out.rmse = std::sqrt(acc / n);
  return out;
}

double aligned_rmse(const PointSet& a, const PointSet& b) {
  return procrustes_align(a, b).rmse;
}

}  // namespace magcath
