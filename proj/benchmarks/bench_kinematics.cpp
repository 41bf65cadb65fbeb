#include <benchmark/benchmark.h>

#include "magcath/control.hpp"
#include "magcath/jacobians.hpp"
#include "magcath/spec_io.hpp"

namespace {

using namespace magcath;

const CatheterSpec& pebax() {
  static const CatheterSpec spec = builtin_spec("pebax35");
  return spec;
}

ActuationInput bent_input() {
  ActuationInput in = zero_actuation(pebax());
  in.currents << 0.08, -0.05, 0.03;
  return in;
}

void BM_IntegrateIvp(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  const Eigen::Vector3d u0(0.005, -0.003, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_ivp(pebax(), loads, in, u0));
  }
}
BENCHMARK(BM_IntegrateIvp);

void BM_IntegrateIvpWithDerivatives(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  const Eigen::Vector3d u0(0.005, -0.003, 0.0);
  ParamLayout layout;
  layout.n_actuators = pebax().actuator_count();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        integrate_ivp(pebax(), loads, in, u0, {}, &layout));
  }
}
BENCHMARK(BM_IntegrateIvpWithDerivatives);

void BM_SolveBvpCold(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        solve_bvp(pebax(), loads, in, Eigen::Vector3d::Zero()));
  }
}
BENCHMARK(BM_SolveBvpCold);

void BM_SolveBvpWarm(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  const BvpSolution sol = solve_bvp(pebax(), loads, in, Eigen::Vector3d::Zero());
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_bvp(pebax(), loads, in, sol.u0));
  }
}
BENCHMARK(BM_SolveBvpWarm);

void BM_AnalyticalJacobian(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  const BvpSolution sol = solve_bvp(pebax(), loads, in, Eigen::Vector3d::Zero());
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble_bvp_jacobian(pebax(), loads, sol));
  }
}
BENCHMARK(BM_AnalyticalJacobian);

void BM_FdJacobian(benchmark::State& state) {
  const ExternalLoads loads;
  const ActuationInput in = bent_input();
  const BvpSolution sol = solve_bvp(pebax(), loads, in, Eigen::Vector3d::Zero());
  for (auto _ : state) {
    benchmark::DoNotOptimize(fd_bvp_jacobian(pebax(), loads, sol));
  }
}
BENCHMARK(BM_FdJacobian);

void BM_DlsStep(benchmark::State& state) {
  Eigen::Matrix3Xd jac(3, 4);
  jac << 120.0, -40.0, 8.0, 0.2, 15.0, 130.0, -22.0, -0.1, -3.0, 9.0, 140.0,
      0.9;
  const Eigen::Vector3d err(0.4, -0.2, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dls_step(jac, err, 0.1));
  }
}
BENCHMARK(BM_DlsStep);

}  // namespace

BENCHMARK_MAIN();
