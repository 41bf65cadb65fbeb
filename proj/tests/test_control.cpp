#include <doctest.h>

#include <cmath>

#include "magcath/control.hpp"
#include "magcath/spec_io.hpp"
#include "support.hpp"

using namespace magcath;

TEST_CASE("shape names round trip") {
  for (const std::string name : {"circle", "lemniscate", "rectangle",
                                 "butterfly"}) {
    CHECK(shape_name(shape_from_name(name)) == name);
  }
  CHECK_THROWS_AS(shape_from_name("triangle"), InputError);
}

TEST_CASE("circle samples sit on the circle at uniform angles") {
  const auto four = shape_samples(TrajectoryShape::Circle, 5.0, 4);
  REQUIRE(four.size() == 4);
  CHECK((four[0] - Eigen::Vector2d(5.0, 0.0)).norm() < 1e-12);
  CHECK((four[1] - Eigen::Vector2d(0.0, 5.0)).norm() < 1e-12);
  CHECK((four[2] - Eigen::Vector2d(-5.0, 0.0)).norm() < 1e-12);
  CHECK((four[3] - Eigen::Vector2d(0.0, -5.0)).norm() < 1e-12);
  for (const auto& p : shape_samples(TrajectoryShape::Circle, 5.0, 16)) {
    CHECK(p.norm() == doctest::Approx(5.0));
  }
}

TEST_CASE("rectangle walk includes the corners when count divides by 4") {
  const double s = 2.0;
  const auto pts = shape_samples(TrajectoryShape::Rectangle, s, 8);
  REQUIRE(pts.size() == 8);
  for (const auto& p : pts) {
    CHECK(std::max(std::abs(p.x()), std::abs(p.y())) == doctest::Approx(s));
  }
  int corners = 0;
  for (const auto& p : pts) {
    if (std::abs(std::abs(p.x()) - s) < 1e-12 &&
        std::abs(std::abs(p.y()) - s) < 1e-12) {
      ++corners;
    }
  }
  CHECK(corners == 4);
  CHECK((pts[0] - Eigen::Vector2d(s, s)).norm() < 1e-12);
  CHECK(shape_max_radius(TrajectoryShape::Rectangle, s) ==
        doctest::Approx(s * std::sqrt(2.0)));
}

TEST_CASE("lemniscate passes through the center twice per lap") {
  const auto pts = shape_samples(TrajectoryShape::Lemniscate, 6.0, 4);
  REQUIRE(pts.size() == 4);
  CHECK((pts[0] - Eigen::Vector2d(6.0, 0.0)).norm() < 1e-12);
  CHECK(pts[1].norm() < 1e-12);
  CHECK((pts[2] - Eigen::Vector2d(-6.0, 0.0)).norm() < 1e-12);
  CHECK(pts[3].norm() < 1e-12);
  CHECK(shape_max_radius(TrajectoryShape::Lemniscate, 6.0) == 6.0);
}

TEST_CASE("butterfly peak is normalized to the requested size") {
  const double size = 7.0;
  const auto pts = shape_samples(TrajectoryShape::Butterfly, size, 2000);
  double peak = 0.0;
  for (const auto& p : pts) peak = std::max(peak, p.norm());
  CHECK(peak <= size + 1e-9);
  CHECK(peak > 0.999 * size);
  CHECK(shape_max_radius(TrajectoryShape::Butterfly, size) == size);
}

TEST_CASE("shape arguments are validated") {
  CHECK_THROWS_AS(shape_samples(TrajectoryShape::Circle, 0.0, 8), InputError);
  CHECK_THROWS_AS(shape_samples(TrajectoryShape::Circle, 5.0, 0), InputError);
  CHECK_THROWS_AS(shape_max_radius(TrajectoryShape::Circle, -1.0), InputError);
}

TEST_CASE("damped least squares step") {
  Eigen::Matrix3Xd J(3, 4);
  J << 1.0, 0.2, 0.0, -0.4,
       0.0, 0.9, 0.3, 0.1,
      -0.2, 0.0, 1.1, 0.5;
  const Eigen::Vector3d dp{0.4, -0.2, 0.7};

  CHECK(dls_step(J, Eigen::Vector3d::Zero(), 0.1).norm() == doctest::Approx(0.0));

  const double lam = 0.1;
  const Eigen::Matrix3d gram =
      J * J.transpose() + lam * lam * Eigen::Matrix3d::Identity();
  const Eigen::VectorXd expected = J.transpose() * gram.inverse() * dp;
  CHECK((dls_step(J, dp, lam) - expected).norm() < 1e-12);

  // Minimum-norm solution for [I | 0] with no damping.
  Eigen::Matrix3Xd wide(3, 5);
  wide.setZero();
  wide.leftCols<3>().setIdentity();
  const Eigen::VectorXd mn = dls_step(wide, dp, 0.0);
  CHECK((mn.head<3>() - dp).norm() < 1e-12);
  CHECK(mn.tail<2>().norm() == doctest::Approx(0.0));

  // Heavy damping collapses to the scaled gradient.
  const double big = 1e4;
  const Eigen::VectorXd tiny = dls_step(J, dp, big);
  const Eigen::VectorXd asym = J.transpose() * dp / (big * big);
  CHECK((tiny - asym).norm() < 0.01 * asym.norm());

  // More damping, shorter step.
  double prev = dls_step(J, dp, 1e-3).norm();
  for (const double l : {0.01, 0.1, 1.0, 10.0}) {
    const double cur = dls_step(J, dp, l).norm();
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }

  Eigen::Matrix3Xd rank2(3, 3);
  rank2.setZero();
  rank2(0, 0) = 1.0;
  rank2(1, 1) = 1.0;  // third row identically zero
  CHECK_THROWS_AS(dls_step(rank2, dp, 0.0), InputError);
}

TEST_CASE("trajectory frame planning is deterministic and sane") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const TrajectoryFrame a = plan_trajectory_frame(spec, ExternalLoads{}, 8.0);
  const TrajectoryFrame b = plan_trajectory_frame(spec, ExternalLoads{}, 8.0);
  CHECK((a.orientation - spec.base.R).norm() == doctest::Approx(0.0));
  CHECK(a.center.x() == doctest::Approx(0.0));
  CHECK(a.center.y() == doctest::Approx(0.0));
  CHECK(a.center.z() > 100.0);
  CHECK(a.center.z() < 146.0);
  CHECK((a.center - b.center).norm() == doctest::Approx(0.0));

  // A wider trajectory pulls the plane lower (more bend needed).
  const TrajectoryFrame wide = plan_trajectory_frame(spec, ExternalLoads{}, 12.0);
  CHECK(wide.center.z() < a.center.z());

  CHECK_THROWS_AS(plan_trajectory_frame(spec, ExternalLoads{}, 200.0),
                  InputError);
  CHECK_THROWS_AS(plan_trajectory_frame(spec, ExternalLoads{}, 0.0), InputError);
}

TEST_CASE("samples are placed in the frame") {
  TrajectoryFrame frame;
  frame.center = {1.0, 2.0, 3.0};
  frame.orientation = so3::rot_z(0.5);
  const auto placed = place_samples(frame, {{1.0, 0.0}, {0.0, 2.0}});
  REQUIRE(placed.size() == 2);
  const Eigen::Vector3d e0 =
      frame.center + frame.orientation * Eigen::Vector3d(1.0, 0.0, 0.0);
  CHECK((placed[0] - e0).norm() < 1e-15);
  CHECK(placed[1].z() == doctest::Approx(3.0));
}

TEST_CASE("a waypoint at the resting tip needs no iterations") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const TrackResult result = track_trajectory(
      spec, ExternalLoads{}, {Eigen::Vector3d(0.0, 0.0, 146.0)});
  REQUIRE(result.steps.size() == 1);
  CHECK(result.success);
  CHECK(result.steps[0].inner_iterations == 0);
  CHECK(result.steps[0].converged);
  CHECK(result.steps[0].currents.norm() == doctest::Approx(0.0));
  CHECK(result.steps[0].position_error < 1e-3);
}

TEST_CASE("a small circle is tracked to sub-micron model error") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ExternalLoads loads;
  const TrajectoryFrame frame = plan_trajectory_frame(spec, loads, 6.0);
  const auto waypoints =
      place_samples(frame, shape_samples(TrajectoryShape::Circle, 6.0, 12));

  const TrackResult result = track_trajectory(spec, loads, waypoints);
  REQUIRE(result.steps.size() == 12);
  CHECK(result.success);
  CHECK(result.failed_waypoint == -1);
  CHECK(result.rmse_model_vs_desired < 1e-3);
  for (const auto& step : result.steps) {
    CHECK(step.converged);
    CHECK(step.position_error < 1e-3);
    CHECK(step.currents.cwiseAbs().maxCoeff() <= spec.current_limit + 1e-12);
    CHECK(step.inserted_length >= 1.0);
    CHECK(step.inserted_length <= 146.0);
    CHECK(step.inner_iterations <= 20);
  }

  // Replaying the recorded inputs through the forward model reproduces the
  // recorded tip positions exactly.
  for (const auto& step : result.steps) {
    ActuationInput input;
    input.currents = step.currents;
    input.inserted_length = step.inserted_length;
    const IvpResult replay = integrate_ivp(spec, loads, input, step.u0);
    CHECK((replay.tip.p - step.p_model).norm() == 0.0);
  }

  // Determinism: an identical run produces bit-identical records.
  const TrackResult again = track_trajectory(spec, loads, waypoints);
  REQUIRE(again.steps.size() == result.steps.size());
  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    CHECK((again.steps[i].p_model - result.steps[i].p_model).norm() == 0.0);
    CHECK((again.steps[i].currents - result.steps[i].currents).norm() == 0.0);
    CHECK(again.steps[i].inserted_length == result.steps[i].inserted_length);
    CHECK(again.steps[i].inner_iterations == result.steps[i].inner_iterations);
  }
}

TEST_CASE("tracking with the differenced jacobian agrees with the analytic one") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ExternalLoads loads;
  const TrajectoryFrame frame = plan_trajectory_frame(spec, loads, 4.0);
  const auto waypoints =
      place_samples(frame, shape_samples(TrajectoryShape::Circle, 4.0, 4));

  IkOptions fd;
  fd.fd_jacobian = true;
  const TrackResult a = track_trajectory(spec, loads, waypoints, fd);
  const TrackResult b = track_trajectory(spec, loads, waypoints);
  CHECK(a.success);
  CHECK(b.success);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK((a.steps[i].p_model - b.steps[i].p_model).norm() < 2e-3);
  }
}

TEST_CASE("an unreachable waypoint aborts with a failure index") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const std::vector<Eigen::Vector3d> waypoints{
      Eigen::Vector3d(0.0, 0.0, 140.0), Eigen::Vector3d(300.0, 0.0, 0.0),
      Eigen::Vector3d(0.0, 0.0, 139.0)};
  const TrackResult result = track_trajectory(spec, ExternalLoads{}, waypoints);
  CHECK_FALSE(result.success);
  CHECK(result.failed_waypoint == 1);
  CHECK(result.steps.size() == 2);  // the run stops at the failure
  CHECK(result.steps[1].position_error > 10.0 * 1e-3);
}

TEST_CASE("tracking rejects empty or invalid input") {
  const CatheterSpec spec = builtin_spec("pebax35");
  CHECK_THROWS_AS(track_trajectory(spec, ExternalLoads{}, {}), InputError);
  IkOptions bad;
  bad.position_tolerance = 0.0;
  CHECK_THROWS_AS(track_trajectory(spec, ExternalLoads{},
                                   {Eigen::Vector3d(0.0, 0.0, 146.0)}, bad),
                  InputError);
}
