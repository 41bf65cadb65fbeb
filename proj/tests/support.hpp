#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "magcath/metrics.hpp"
#include "magcath/so3.hpp"
#include "magcath/types.hpp"

namespace magcath::testsupport {

// Uniform flexible rod with explicit stiffness; radii are placeholders.
inline CatheterSpec uniform_rod(double length, const Eigen::Vector3d& stiffness,
                                double mass_per_length = 0.0) {
  CatheterSpec spec;
  spec.name = "uniform";
  spec.inner_radius = 0.5;
  spec.outer_radius = 1.0;
  FlexibleSegment f;
  f.length = length;
  f.stiffness = stiffness;
  f.mass_per_length = mass_per_length;
  spec.segments = {f};
  return spec;
}

// Uniform rod of length 100 with K = diag(1000, 1000, 800) ending in a 10 mm
// rigid segment whose coil produces the tip moment 12.875*sin(theta_tip) about
// the x axis at unit current on coil 3. The bent equilibrium satisfies
// 1000*kappa = 12.875*sin(100*kappa).
inline CatheterSpec bent_equilibrium_rig() {
  CatheterSpec spec = uniform_rod(100.0, {1000.0, 1000.0, 800.0});
  spec.name = "rig";
  Actuator coil;
  coil.turn_area = {0.0, 0.0, -4.2916666666666667};
  RigidSegment tip_link;
  tip_link.length = 10.0;
  tip_link.actuator = coil;
  spec.segments.emplace_back(tip_link);
  return spec;
}

// Positive root of 1000*kappa - 12.875*sin(100*kappa) = 0 by bisection.
inline double bent_equilibrium_curvature() {
  auto f = [](double k) { return 1000.0 * k - 12.875 * std::sin(100.0 * k); };
  double lo = 1e-4, hi = 0.012875;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Closed-form tip of the rig at curvature kappa: circular arc of the flexible
// part plus the straight rigid extension.
inline Eigen::Vector3d bent_equilibrium_tip(double kappa) {
  const double theta = 100.0 * kappa;
  Eigen::Vector3d p(0.0, (std::cos(theta) - 1.0) / kappa,
                    std::sin(theta) / kappa);
  p += 10.0 * Eigen::Vector3d(0.0, -std::sin(theta), std::cos(theta));
  return p;
}

// Brute-force minimum rms distance over proper rotations (translation solved
// by centroid matching), zooming ZYZ Euler grid search.
inline double grid_aligned_rmse(const PointSet& a, const PointSet& b) {
  const auto n = static_cast<double>(a.size());
  Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
  for (const auto& p : a) ca += p;
  for (const auto& p : b) cb += p;
  ca /= n;
  cb /= n;
  std::vector<Eigen::Vector3d> ac, bc;
  for (const auto& p : a) ac.push_back(p - ca);
  for (const auto& p : b) bc.push_back(p - cb);

  const auto cost = [&](double al, double be, double ga) {
    const Eigen::Matrix3d R =
        so3::rot_z(al) * so3::rot_y(be) * so3::rot_z(ga);
    double acc = 0.0;
    for (std::size_t i = 0; i < ac.size(); ++i)
      acc += (R * ac[i] - bc[i]).squaredNorm();
    return std::sqrt(acc / n);
  };

  const double pi = 3.14159265358979323846;
  double best = std::numeric_limits<double>::infinity();
  double ba = 0.0, bb = 0.0, bg = 0.0;
  const int coarse = 24;
  for (int i = 0; i < coarse; ++i)
    for (int j = 0; j <= coarse / 2; ++j)
      for (int k = 0; k < coarse; ++k) {
        const double al = -pi + 2.0 * pi * i / coarse;
        const double be = pi * j / (coarse / 2);
        const double ga = -pi + 2.0 * pi * k / coarse;
        const double c = cost(al, be, ga);
        if (c < best) {
          best = c;
          ba = al;
          bb = be;
          bg = ga;
        }
      }
  double span = 2.0 * pi / coarse;
  for (int round = 0; round < 7; ++round) {
    const int m = 6;
    double nba = ba, nbb = bb, nbg = bg;
    for (int i = -m; i <= m; ++i)
      for (int j = -m; j <= m; ++j)
        for (int k = -m; k <= m; ++k) {
          const double al = ba + span * i / m;
          const double be = bb + span * j / m;
          const double ga = bg + span * k / m;
          const double c = cost(al, be, ga);
          if (c < best) {
            best = c;
            nba = al;
            nbb = be;
            nbg = ga;
          }
        }
    ba = nba;
    bb = nbb;
    bg = nbg;
    span /= 5.0;
  }
  return best;
}

inline PointSet random_planar_trace(std::mt19937_64& rng, int count,
                                    double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double pi = 3.14159265358979323846;
  PointSet out;
  for (int i = 0; i < count; ++i) {
    const double th = 2.0 * pi * i / count;
    const double r = radius * (0.6 + 0.4 * std::abs(u(rng)));
    out.emplace_back(r * std::cos(th), r * std::sin(th), 0.0);
  }
  return out;
}

}  // namespace magcath::testsupport
