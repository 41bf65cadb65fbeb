#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "magcath/bvp.hpp"

namespace magcath {

struct JacobianOptions {
  bool include_insertion = true;
  double fd_current_step = 1e-4;    // A
  double fd_insertion_step = 1e-4;  // mm
  SolverOptions solver;
};

// Sensitivity of the solved tip state to the actuation inputs
// [currents..., inserted_length]. rotation holds the virtual angular
// velocity of the tip frame per input unit.
struct BvpJacobian {
  Eigen::MatrixXd position;
  Eigen::MatrixXd rotation;
  Eigen::MatrixXd curvature;
  Eigen::MatrixXd du0_dz;  // sensitivity of the converged initial curvature
  std::vector<std::string> column_labels;
  std::vector<bool> fd_column;

  int cols() const { return static_cast<int>(position.cols()); }
};

// Analytical assembly at a converged solution: propagated sensitivity blocks
// composed with the implicit dependence of u0 on the inputs,
// du0/dz = -(d res/d u0)^-1 (d res/d z). The insertion column is finite
// differenced (re-solving the boundary problem) and flagged in fd_column.
BvpJacobian assemble_bvp_jacobian(const CatheterSpec& spec,
                                  const ExternalLoads& loads,
                                  const BvpSolution& sol,
                                  const JacobianOptions& opts = {});

// Central-difference reference: every column obtained by re-solving the
// boundary problem at perturbed inputs, warm started from sol.
BvpJacobian fd_bvp_jacobian(const CatheterSpec& spec, const ExternalLoads& loads,
                            const BvpSolution& sol,
                            const JacobianOptions& opts = {});

struct BenchSummary {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

struct BenchReport {
  int samples = 0;
  std::uint64_t seed = 0;
  BenchSummary analytical;
  BenchSummary fd;
  double max_rel_deviation = 0.0;
  std::vector<double> analytical_ms;
  std::vector<double> fd_ms;
};

BenchSummary summarize_times(std::vector<double> ms);

// Times both Jacobian paths over random current draws (uniform within
// +-current_range). Inputs are deterministic under the seed; wall times are
// measured per sample.
BenchReport bench_jacobians(const CatheterSpec& spec, const ExternalLoads& loads,
                            int samples, std::uint64_t seed,
                            double current_range = 0.3,
                            const JacobianOptions& opts = {});

}  // namespace magcath
