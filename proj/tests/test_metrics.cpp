#include <doctest.h>

#include <random>

#include "magcath/metrics.hpp"
#include "support.hpp"

using namespace magcath;
using namespace magcath::testsupport;

namespace {

PointSet random_cloud(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  PointSet out;
  for (int i = 0; i < n; ++i) out.emplace_back(d(rng), d(rng), d(rng));
  return out;
}

PointSet transformed(const PointSet& a, const Eigen::Matrix3d& R,
                     const Eigen::Vector3d& t) {
  PointSet out;
  for (const auto& p : a) out.push_back(R * p + t);
  return out;
}

}  // namespace

TEST_CASE("rmse hand values") {
  const PointSet a{{0, 0, 0}, {1, 1, 0}, {2, 0, 1}};
  CHECK(rmse(a, a) == doctest::Approx(0.0));

  PointSet shifted = transformed(a, Eigen::Matrix3d::Identity(), {3, 4, 0});
  CHECK(rmse(a, shifted) == doctest::Approx(5.0));

  const PointSet zeros{{0, 0, 0}, {0, 0, 0}};
  const PointSet split{{1, 0, 0}, {0, 1, 0}};
  CHECK(rmse(zeros, split) == doctest::Approx(1.0));

  const PointSet one_off{{1, 0, 0}, {0, 0, 0}};
  CHECK(rmse(zeros, one_off) == doctest::Approx(std::sqrt(0.5)));

  CHECK_THROWS_AS(rmse(a, zeros), InputError);
  CHECK_THROWS_AS(rmse({}, {}), InputError);
}

TEST_CASE("procrustes recovers a known rigid transform") {
  std::mt19937_64 rng(11);
  const PointSet a = random_cloud(rng, 20, 50.0);
  const Eigen::Matrix3d R = so3::exp({0.4, -1.1, 0.7});
  const Eigen::Vector3d t{12.0, -5.0, 30.0};
  const PointSet b = transformed(a, R, t);

  const Alignment fit = procrustes_align(a, b);
  CHECK((fit.R - R).norm() < 1e-12);
  CHECK((fit.t - t).norm() < 1e-10);
  CHECK(fit.rmse < 1e-12);
  CHECK(fit.R.determinant() == doctest::Approx(1.0));
  CHECK(aligned_rmse(a, b) < 1e-10);
}

TEST_CASE("reflections are never returned") {
  std::mt19937_64 rng(13);
  const PointSet a = random_cloud(rng, 15, 10.0);
  PointSet mirrored;
  for (const auto& p : a) mirrored.emplace_back(-p.x(), p.y(), p.z());
  const Alignment fit = procrustes_align(a, mirrored);
  CHECK(fit.R.determinant() == doctest::Approx(1.0));
  CHECK(fit.rmse > 1e-3);
}

TEST_CASE("scaling is not removed by alignment") {
  std::mt19937_64 rng(17);
  const PointSet a = random_cloud(rng, 12, 20.0);
  PointSet scaled;
  for (const auto& p : a) scaled.push_back(1.1 * p);
  CHECK(aligned_rmse(a, scaled) > 0.1);
}

TEST_CASE("degenerate clouds fall back gracefully") {
  const PointSet same(5, Eigen::Vector3d(1.0, 2.0, 3.0));
  const PointSet other(5, Eigen::Vector3d(-4.0, 0.0, 7.0));
  const Alignment fit = procrustes_align(same, other);
  CHECK((fit.R - Eigen::Matrix3d::Identity()).norm() == doctest::Approx(0.0));
  CHECK(fit.rmse < 1e-12);

  PointSet line, line_moved;
  const Eigen::Matrix3d R = so3::rot_z(0.8);
  for (int i = 0; i < 6; ++i) {
    const Eigen::Vector3d p(static_cast<double>(i), 0.0, 0.0);
    line.push_back(p);
    line_moved.push_back(R * p + Eigen::Vector3d(1.0, -2.0, 0.5));
  }
  CHECK(aligned_rmse(line, line_moved) < 1e-10);
}

TEST_CASE("aligned rmse never exceeds raw rmse") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const PointSet a = random_cloud(rng, 10, 30.0);
    const PointSet b = random_cloud(rng, 10, 30.0);
    CHECK(aligned_rmse(a, b) <= rmse(a, b) + 1e-12);
  }
}

TEST_CASE("no random rigid probe beats the returned alignment") {
  std::mt19937_64 rng(29);
  const PointSet a = random_cloud(rng, 16, 25.0);
  PointSet b = random_cloud(rng, 16, 25.0);
  const double best = aligned_rmse(a, b);

  Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
  for (const auto& p : a) ca += p;
  for (const auto& p : b) cb += p;
  ca /= 16.0;
  cb /= 16.0;

  std::uniform_real_distribution<double> d(-3.15, 3.15);
  for (int probe = 0; probe < 1000; ++probe) {
    const Eigen::Matrix3d R = so3::exp({d(rng), d(rng), d(rng)});
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      acc += (R * (a[i] - ca) - (b[i] - cb)).squaredNorm();
    }
    CHECK(std::sqrt(acc / 16.0) >= best - 1e-12);
  }
}

TEST_CASE("alignment agrees with the rotation-grid oracle") {
  const PointSet square{{1, 1, 0}, {-1, 1, 0}, {-1, -1, 0}, {1, -1, 0}};
  PointSet bent = square;
  bent[0] = {1.0, 2.0, 0.0};  // one corner displaced by 1 mm
  const double kabsch = aligned_rmse(square, bent);
  const double grid = grid_aligned_rmse(square, bent);
  CHECK(kabsch == doctest::Approx(grid).epsilon(1e-6));
  CHECK(kabsch > 0.1);

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const PointSet t1 = random_planar_trace(rng, 24, 10.0);
    const PointSet t2 = random_planar_trace(rng, 24, 10.0);
    const double k = aligned_rmse(t1, t2);
    const double g = grid_aligned_rmse(t1, t2);
    CHECK(std::abs(k - g) < 1e-6 * std::max(1.0, g));
  }
}
