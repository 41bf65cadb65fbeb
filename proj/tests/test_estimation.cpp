#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "magcath/estimation.hpp"
#include "magcath/so3.hpp"
#include "magcath/spec_io.hpp"
#include "support.hpp"

using namespace magcath;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("magcath-est-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("parameter packing round trips") {
  ParameterSet p;
  p.young_modulus = 31.03;
  p.shear_modulus = 8.11;
  p.alignment_x = 0.25;
  p.alignment_y = -0.1;
  p.turn_area = {-0.43, 0.57, 0.71};
  p.coil_mass = 2.78e-9;
  p.mass_per_length = 5.89e-11;

  const Eigen::VectorXd packed = p.pack();
  REQUIRE(packed.size() == ParameterSet::kCount);
  CHECK(packed(0) == doctest::Approx(31.03));
  CHECK(packed(7) == doctest::Approx(std::log(2.78e-9)));
  CHECK(packed(8) == doctest::Approx(std::log(5.89e-11)));

  const ParameterSet back = ParameterSet::unpack(packed);
  CHECK(back.young_modulus == doctest::Approx(p.young_modulus));
  CHECK(back.coil_mass == doctest::Approx(p.coil_mass).epsilon(1e-12));
  CHECK(back.mass_per_length ==
        doctest::Approx(p.mass_per_length).epsilon(1e-12));
  CHECK((back.turn_area - p.turn_area).norm() < 1e-15);

  ParameterSet nonpositive = p;
  nonpositive.coil_mass = 0.0;
  CHECK_THROWS_AS(nonpositive.pack(), InputError);

  CHECK(ParameterSet::names().size() == ParameterSet::kCount);
  CHECK(ParameterSet::names()[0] == "young_modulus");
}

TEST_CASE("spec parameters invert the annulus stiffness") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet p = params_from_spec(spec);
  CHECK(p.young_modulus == doctest::Approx(31.03).epsilon(1e-10));
  CHECK(p.shear_modulus == doctest::Approx(8.11).epsilon(1e-10));
  CHECK(p.turn_area.x() == doctest::Approx(-0.43));
  CHECK(p.coil_mass == doctest::Approx(2.78e-9));
  CHECK(p.mass_per_length == doctest::Approx(5.89e-11));

  // apply then read back is the identity on the shared parameters.
  const CatheterSpec rebuilt = apply_parameters(spec, p);
  const ParameterSet q = params_from_spec(rebuilt);
  CHECK((q.pack() - p.pack()).norm() < 1e-12);
  CHECK(std::get<FlexibleSegment>(rebuilt.segments[0]).stiffness.x() ==
        doctest::Approx(
            std::get<FlexibleSegment>(spec.segments[0]).stiffness.x()));
}

TEST_CASE("bounds freeze and count free entries") {
  ParameterBounds b = ParameterBounds::wide();
  REQUIRE(b.lower.size() == ParameterSet::kCount);
  CHECK(b.free_count() == ParameterSet::kCount);
  b.freeze(2, 0.25);
  CHECK(b.frozen(2));
  CHECK_FALSE(b.frozen(0));
  CHECK(b.free_count() == ParameterSet::kCount - 1);

  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet p = params_from_spec(spec);
  const ParameterBounds around = ParameterBounds::around(p, 0.2);
  const Eigen::VectorXd packed = p.pack();
  for (int i = 0; i < packed.size(); ++i) {
    CHECK(around.lower(i) <= packed(i));
    CHECK(around.upper(i) >= packed(i));
  }
}

TEST_CASE("ground-truth parameters predict the observations") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet truth = params_from_spec(spec);
  const auto inputs = make_three_sweep_protocol(spec, 3, 0.25);
  REQUIRE(inputs.size() == 9);
  for (const auto& in : inputs) {
    CHECK(in.inserted_length == doctest::Approx(146.0));
    CHECK(in.currents.cwiseAbs().maxCoeff() <= 0.25 + 1e-12);
  }

  std::mt19937_64 rng(5);
  const ObservationSet obs =
      synthesize_observations(spec, ExternalLoads{}, inputs, 0.0, rng);
  REQUIRE(obs.size() == 9);

  const auto predicted = predict_tips(spec, truth, obs);
  REQUIRE(predicted.size() == obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    REQUIRE(predicted[i].has_value());
    CHECK((*predicted[i] - obs[i].p_obs).norm() < 1e-9);
  }
}

TEST_CASE("zero-current predictions ignore the magnetic parameters") {
  const CatheterSpec spec = builtin_spec("pebax35");
  ObservationSet obs(2);
  obs[0].input = zero_actuation(spec);
  obs[1].input = zero_actuation(spec);
  obs[1].input.inserted_length = 120.0;

  ParameterSet a = params_from_spec(spec);
  ParameterSet b = a;
  b.alignment_x += 0.5;
  b.alignment_y -= 0.3;
  b.turn_area *= 3.0;

  const auto pa = predict_tips(spec, a, obs);
  const auto pb = predict_tips(spec, b, obs);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    REQUIRE(pa[i].has_value());
    REQUIRE(pb[i].has_value());
    CHECK((*pa[i] - *pb[i]).norm() < 1e-12);
  }
}

TEST_CASE("elastic moduli are recovered from noiseless sweeps") {
  // A base tilted against the field makes the side-coil sweep twist the rod,
  // which is what gives the shear modulus a measurable signal.
  CatheterSpec spec = builtin_spec("pebax35");
  spec.base.R = so3::exp(Eigen::Vector3d(0.35, 0.0, 0.0));
  const ParameterSet truth = params_from_spec(spec);
  const auto inputs = make_three_sweep_protocol(spec, 3, 0.25);
  std::mt19937_64 rng(7);

  SolverOptions fast;
  fast.integrator.steps_per_mm = 2.0;
  const ObservationSet obs =
      synthesize_observations(spec, ExternalLoads{}, inputs, 0.0, rng, fast);

  ParameterSet init = truth;
  init.young_modulus *= 1.2;
  init.shear_modulus *= 0.8;

  ParameterBounds bounds = ParameterBounds::wide();
  const Eigen::VectorXd at_truth = truth.pack();
  for (int i = 2; i < ParameterSet::kCount; ++i) {
    bounds.freeze(i, at_truth(i));  // only the moduli are free here
  }

  FitOptions opts;
  opts.solver = fast;
  const FitResult fit =
      estimate_parameters(spec, obs, init, bounds, ExternalLoads{}, opts);
  CHECK(fit.converged);
  CHECK(fit.failed_records == 0);
  CHECK(fit.residual_rmse < 1e-6);
  CHECK(fit.params.young_modulus ==
        doctest::Approx(truth.young_modulus).epsilon(0.01));
  CHECK(fit.params.shear_modulus ==
        doctest::Approx(truth.shear_modulus).epsilon(0.01));
  CHECK(fit.confidence.size() == ParameterSet::kCount);
  CHECK(fit.confidence(0) > 0.0);
  CHECK(fit.confidence(2) == 0.0);  // frozen entries carry no confidence

  // Determinism: the same fit twice is bitwise identical.
  const FitResult again =
      estimate_parameters(spec, obs, init, bounds, ExternalLoads{}, opts);
  CHECK((again.packed - fit.packed).norm() == 0.0);
  CHECK(again.iterations == fit.iterations);
}

TEST_CASE("noisy observations land at the noise floor") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet truth = params_from_spec(spec);
  const auto inputs = make_three_sweep_protocol(spec, 3, 0.25);

  SolverOptions fast;
  fast.integrator.steps_per_mm = 2.0;
  FitOptions opts;
  opts.solver = fast;
  opts.max_iterations = 40;

  ParameterSet init = truth;
  init.young_modulus *= 1.1;

  ParameterBounds bounds = ParameterBounds::wide();
  const Eigen::VectorXd at_truth = truth.pack();
  for (int i = 2; i < ParameterSet::kCount; ++i) bounds.freeze(i, at_truth(i));

  for (const std::uint64_t seed : {11u, 12u, 13u}) {
    std::mt19937_64 rng(seed);
    const ObservationSet obs =
        synthesize_observations(spec, ExternalLoads{}, inputs, 0.5, rng, fast);
    const FitResult fit =
        estimate_parameters(spec, obs, init, bounds, ExternalLoads{}, opts);
    CHECK(fit.residual_rmse > 0.25);
    CHECK(fit.residual_rmse < 0.9);

    // The fit never ends worse than its starting point.
    const auto start =
        predict_tips(spec, init, obs, ExternalLoads{}, fast);
    double ss = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      ss += (*start[i] - obs[i].p_obs).squaredNorm();
    }
    const double initial_rmse = std::sqrt(ss / (3.0 * obs.size()));
    CHECK(fit.residual_rmse <= initial_rmse + 1e-12);
  }
}

TEST_CASE("iterates respect the box bounds") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet truth = params_from_spec(spec);
  const auto inputs = make_three_sweep_protocol(spec, 3, 0.25);
  std::mt19937_64 rng(17);
  SolverOptions fast;
  fast.integrator.steps_per_mm = 2.0;
  const ObservationSet obs =
      synthesize_observations(spec, ExternalLoads{}, inputs, 0.0, rng, fast);

  ParameterBounds bounds = ParameterBounds::around(truth, 0.1);
  const Eigen::VectorXd at_truth = truth.pack();
  for (int i = 2; i < ParameterSet::kCount; ++i) bounds.freeze(i, at_truth(i));
  // Start at the corner of the box.
  ParameterSet init = truth;
  init.young_modulus = ParameterSet::unpack(bounds.upper).young_modulus;
  init.shear_modulus = ParameterSet::unpack(bounds.upper).shear_modulus;

  FitOptions opts;
  opts.solver = fast;
  opts.max_iterations = 25;
  const FitResult fit =
      estimate_parameters(spec, obs, init, bounds, ExternalLoads{}, opts);
  for (int i = 0; i < ParameterSet::kCount; ++i) {
    CHECK(fit.packed(i) >= bounds.lower(i) - 1e-12);
    CHECK(fit.packed(i) <= bounds.upper(i) + 1e-12);
  }
  CHECK(fit.params.young_modulus == doctest::Approx(31.03).epsilon(0.02));
}

TEST_CASE("observation csv round trips and rejects malformed input") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const auto inputs = make_three_sweep_protocol(spec, 2, 0.2);
  std::mt19937_64 rng(3);
  const ObservationSet obs =
      synthesize_observations(spec, ExternalLoads{}, inputs, 0.1, rng);

  TempDir tmp;
  const std::string path = (tmp.path / "obs.csv").string();
  write_observations_csv(path, obs);
  const ObservationSet back = read_observations_csv(path);
  REQUIRE(back.size() == obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    CHECK((back[i].input.currents - obs[i].input.currents).norm() == 0.0);
    CHECK(back[i].input.inserted_length == obs[i].input.inserted_length);
    CHECK((back[i].p_obs - obs[i].p_obs).norm() == 0.0);
  }

  const std::string bad_header = (tmp.path / "bad_header.csv").string();
  {
    std::ofstream out(bad_header);
    out << "record,i1,i2,i3,insert_mm,px,py,pz\n0,0,0,0,146,0,0,146\n";
  }
  CHECK_THROWS_AS(read_observations_csv(bad_header), InputError);

  const std::string bad_row = (tmp.path / "bad_row.csv").string();
  {
    std::ofstream out(bad_row);
    out << "record_id,i1,i2,i3,insert_mm,px,py,pz\n0,0.1,0,0,146,1,2\n";
  }
  CHECK_THROWS_AS(read_observations_csv(bad_row), InputError);
  CHECK_THROWS_AS(read_observations_csv((tmp.path / "missing.csv").string()),
                  InputError);
}

TEST_CASE("estimation rejects starved or out-of-bounds problems") {
  const CatheterSpec spec = builtin_spec("pebax35");
  const ParameterSet truth = params_from_spec(spec);

  ObservationSet two(2);
  two[0].input = zero_actuation(spec);
  two[1].input = zero_actuation(spec);
  two[0].p_obs = {0.0, 0.0, 146.0};
  two[1].p_obs = {0.0, 0.0, 146.0};
  CHECK_THROWS_AS(estimate_parameters(spec, two, truth,
                                      ParameterBounds::wide()),
                  InputError);

  ObservationSet empty;
  CHECK_THROWS_AS(estimate_parameters(spec, empty, truth,
                                      ParameterBounds::wide()),
                  InputError);

  ParameterBounds tight = ParameterBounds::around(truth, 0.01);
  ParameterSet outside = truth;
  outside.young_modulus *= 2.0;
  const auto inputs = make_three_sweep_protocol(spec, 3, 0.2);
  std::mt19937_64 rng(9);
  const ObservationSet obs =
      synthesize_observations(spec, ExternalLoads{}, inputs, 0.0, rng);
  CHECK_THROWS_AS(estimate_parameters(spec, obs, outside, tight), InputError);
}
