#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "magcath/bvp.hpp"

namespace magcath {

struct ObservationRecord {
  ActuationInput input;
  Eigen::Vector3d p_obs = Eigen::Vector3d::Zero();
};

using ObservationSet = std::vector<ObservationRecord>;

struct AllRecordsFailedError : Error {
  using Error::Error;
};

// Fit targets: elastic moduli, coil alignment, turn areas, coil mass and
// linear density. The mass entries enter the packed fit vector in log space.
struct ParameterSet {
  double young_modulus = 0.0;   // N/mm^2
  double shear_modulus = 0.0;   // N/mm^2
  double alignment_x = 0.0;     // rad
  double alignment_y = 0.0;     // rad
  Eigen::Vector3d turn_area = Eigen::Vector3d::Zero();
  double coil_mass = 0.0;        // file mass units, must be > 0
  double mass_per_length = 0.0;  // file mass units per mm, must be > 0

  static constexpr int kCount = 9;
  // Order: E, G, alignment_x, alignment_y, turn_area 1..3, log coil_mass,
  // log mass_per_length.
  Eigen::VectorXd pack() const;
  static ParameterSet unpack(const Eigen::VectorXd& packed);
  static const std::vector<std::string>& names();
};

// Reads the shared parameters off the first flexible segment and first
// actuator of the spec.
ParameterSet params_from_spec(const CatheterSpec& spec);

// Applies the parameters to every flexible segment and every actuator of the
// template. Alignment angles are normalized into (-pi, pi].
CatheterSpec apply_parameters(const CatheterSpec& tmpl, const ParameterSet& p);

// Box bounds in packed space. lower == upper freezes that entry.
struct ParameterBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static ParameterBounds wide();
  // [p*(1-rel), p*(1+rel)] around a reference point (interval ordered for
  // negative entries; angles widened by rel radians).
  static ParameterBounds around(const ParameterSet& p, double rel);

  void freeze(int index, double packed_value);
  bool frozen(int index) const;
  int free_count() const;
};

struct FitOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double max_lambda = 1e12;
  double fd_relative_step = 1e-4;
  double fd_floor = 1e-2;  // |x| floor in the relative step
  SolverOptions solver;
};

struct FitResult {
  ParameterSet params;
  Eigen::VectorXd packed;
  double residual_rmse = 0.0;  // per scalar equation, mm
  // Diagonal of the pseudo-inverse of J^T J in packed order; frozen entries 0.
  Eigen::VectorXd confidence;
  int iterations = 0;
  bool converged = false;
  int failed_records = 0;
};

// Model-predicted tip position per record under the candidate parameters and
// experiment loads; records whose boundary solve fails come back empty.
std::vector<std::optional<Eigen::Vector3d>> predict_tips(
    const CatheterSpec& tmpl, const ParameterSet& params,
    const ObservationSet& observations, const ExternalLoads& loads = {},
    const SolverOptions& solver = {});

// Damped Gauss-Newton (Levenberg-style multiplicative lambda on diag(J^T J))
// over the free packed parameters, fit Jacobian by central finite differences,
// box bounds respected by projection.
FitResult estimate_parameters(const CatheterSpec& tmpl,
                              const ObservationSet& observations,
                              const ParameterSet& init,
                              const ParameterBounds& bounds,
                              const ExternalLoads& loads = {},
                              const FitOptions& opts = {});

// Canonical identifiability protocol: one ramp of each coil current through
// [-max_current, max_current] at full insertion, points_per_sweep points each.
std::vector<ActuationInput> make_three_sweep_protocol(const CatheterSpec& spec,
                                                      int points_per_sweep = 7,
                                                      double max_current = 0.3);

// Forward-model observations with isotropic Gaussian position noise.
ObservationSet synthesize_observations(const CatheterSpec& spec,
                                       const ExternalLoads& loads,
                                       const std::vector<ActuationInput>& inputs,
                                       double noise_sigma, std::mt19937_64& rng,
                                       const SolverOptions& solver = {});

// CSV schema: record_id, i1..iN (A), insert_mm, px, py, pz (mm).
ObservationSet read_observations_csv(const std::string& path);
void write_observations_csv(const std::string& path, const ObservationSet& obs);

}  // namespace magcath
