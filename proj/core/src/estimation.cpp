#include "magcath/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace magcath {

namespace {

const double kPi = 3.14159265358979323846;

double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

}  // namespace

Eigen::VectorXd ParameterSet::pack() const {
  if (coil_mass <= 0.0 || mass_per_length <= 0.0)
    throw InputError("mass parameters must be positive to fit in log space");
  Eigen::VectorXd x(kCount);
  x << young_modulus, shear_modulus, alignment_x, alignment_y, turn_area.x(),
      turn_area.y(), turn_area.z(), std::log(coil_mass),
      std::log(mass_per_length);
  return x;
}

ParameterSet ParameterSet::unpack(const Eigen::VectorXd& packed) {
  if (packed.size() != kCount)
    throw InputError("packed parameter vector has wrong size");
  ParameterSet p;
  p.young_modulus = packed(0);
  p.shear_modulus = packed(1);
  p.alignment_x = packed(2);
  p.alignment_y = packed(3);
  p.turn_area = packed.segment<3>(4);
  p.coil_mass = std::exp(packed(7));
  p.mass_per_length = std::exp(packed(8));
  return p;
}

const std::vector<std::string>& ParameterSet::names() {
  static const std::vector<std::string> n = {
      "young_modulus", "shear_modulus",  "alignment_x",
      "alignment_y",   "turn_area_1",    "turn_area_2",
      "turn_area_3",   "log_coil_mass",  "log_mass_per_length"};
  return n;
}

ParameterSet params_from_spec(const CatheterSpec& spec) {
  require_valid(spec);
  const FlexibleSegment* flex = nullptr;
  const Actuator* act = nullptr;
  for (const auto& seg : spec.segments) {
    if (!flex)
      if (const auto* f = std::get_if<FlexibleSegment>(&seg)) flex = f;
    if (!act)
      if (const auto* r = std::get_if<RigidSegment>(&seg))
        if (r->actuator) act = &*r->actuator;
  }
  if (!flex) throw InputError("spec has no flexible segment");
  if (!act) throw InputError("spec has no actuator");

  const double second_moment =
      annulus_second_moment(spec.inner_radius, spec.outer_radius);
  ParameterSet p;
  p.young_modulus = flex->stiffness.x() / second_moment;
  p.shear_modulus = flex->stiffness.z() / (2.0 * second_moment);
  p.alignment_x = act->alignment_x;
  p.alignment_y = act->alignment_y;
  p.turn_area = act->turn_area;
  p.coil_mass = act->coil_mass;
  p.mass_per_length = flex->mass_per_length;
  return p;
}

CatheterSpec apply_parameters(const CatheterSpec& tmpl, const ParameterSet& p) {
  if (p.young_modulus <= 0.0 || p.shear_modulus <= 0.0)
    throw InputError("elastic moduli must be positive");
  CatheterSpec spec = tmpl;
  const Eigen::Vector3d k = annulus_stiffness(
      p.young_modulus, p.shear_modulus, spec.inner_radius, spec.outer_radius);
  for (auto& seg : spec.segments) {
    if (auto* f = std::get_if<FlexibleSegment>(&seg)) {
      f->stiffness = k;
      f->mass_per_length = p.mass_per_length;
    } else if (auto* r = std::get_if<RigidSegment>(&seg); r && r->actuator) {
      r->actuator->turn_area = p.turn_area;
      r->actuator->alignment_x = normalize_angle(p.alignment_x);
      r->actuator->alignment_y = normalize_angle(p.alignment_y);
      r->actuator->coil_mass = p.coil_mass;
    }
  }
  require_valid(spec);
  return spec;
}

ParameterBounds ParameterBounds::wide() {
  ParameterBounds b;
  b.lower = Eigen::VectorXd(ParameterSet::kCount);
  b.upper = Eigen::VectorXd(ParameterSet::kCount);
  b.lower << 1e-3, 1e-3, -kPi, -kPi, -10.0, -10.0, -10.0, std::log(1e-15),
      std::log(1e-15);
  b.upper << 1e5, 1e5, kPi, kPi, 10.0, 10.0, 10.0, std::log(1e3),
      std::log(1e3);
  return b;
}

ParameterBounds ParameterBounds::around(const ParameterSet& p, double rel) {
  if (rel <= 0.0) throw InputError("bound width must be positive");
  const Eigen::VectorXd x = p.pack();
  ParameterBounds b;
  b.lower = Eigen::VectorXd(ParameterSet::kCount);
  b.upper = Eigen::VectorXd(ParameterSet::kCount);
  for (int i = 0; i < ParameterSet::kCount; ++i) {
    double half;
    if (i == 2 || i == 3)
      half = rel;  // rad, additive for the angles
    else if (i >= 7)
      half = std::abs(std::log1p(rel));  // log space
    else
      half = rel * std::max(std::abs(x(i)), 1e-12);
    b.lower(i) = x(i) - half;
    b.upper(i) = x(i) + half;
  }
  return b;
}

void ParameterBounds::freeze(int index, double packed_value) {
  if (index < 0 || index >= ParameterSet::kCount)
    throw InputError("parameter index out of range");
  lower(index) = packed_value;
  upper(index) = packed_value;
}

bool ParameterBounds::frozen(int index) const {
  return lower(index) >= upper(index);
}

int ParameterBounds::free_count() const {
  int n = 0;
  for (int i = 0; i < ParameterSet::kCount; ++i)
    if (!frozen(i)) ++n;
  return n;
}

std::vector<std::optional<Eigen::Vector3d>> predict_tips(
    const CatheterSpec& tmpl, const ParameterSet& params,
    const ObservationSet& observations, const ExternalLoads& loads,
    const SolverOptions& solver) {
  const CatheterSpec spec = apply_parameters(tmpl, params);
  std::vector<std::optional<Eigen::Vector3d>> out(observations.size());
  Eigen::Vector3d warm = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    try {
      BvpSolution sol =
          solve_bvp(spec, loads, observations[i].input, warm, solver);
      if (sol.converged) {
        warm = sol.u0;
        out[i] = sol.ivp.tip.p;
      }
    } catch (const Error&) {
      // leave the record empty
    }
  }
  return out;
}

namespace {

struct ResidualEval {
  Eigen::VectorXd r;  // stacked over usable records, 3 each
  std::vector<int> used;
  int failed = 0;
};

ResidualEval eval_residuals(const CatheterSpec& tmpl, const ParameterSet& p,
                            const ObservationSet& obs,
                            const ExternalLoads& loads,
                            const SolverOptions& solver) {
  const auto pred = predict_tips(tmpl, p, obs, loads, solver);
  ResidualEval ev;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (pred[i])
      ev.used.push_back(static_cast<int>(i));
    else
      ++ev.failed;
  }
  ev.r.resize(3 * static_cast<int>(ev.used.size()));
  for (std::size_t k = 0; k < ev.used.size(); ++k)
    ev.r.segment<3>(3 * static_cast<Eigen::Index>(k)) =
        *pred[ev.used[k]] - obs[ev.used[k]].p_obs;
  return ev;
}

double mean_square(const ResidualEval& ev) {
  if (ev.r.size() == 0) return std::numeric_limits<double>::infinity();
  return ev.r.squaredNorm() / static_cast<double>(ev.r.size());
}

}  // namespace

FitResult estimate_parameters(const CatheterSpec& tmpl,
                              const ObservationSet& observations,
                              const ParameterSet& init,
                              const ParameterBounds& bounds,
                              const ExternalLoads& loads,
                              const FitOptions& opts) {
  require_valid(tmpl);
  if (bounds.lower.size() != ParameterSet::kCount ||
      bounds.upper.size() != ParameterSet::kCount)
    throw InputError("bounds have wrong size");
  for (int i = 0; i < ParameterSet::kCount; ++i)
    if (bounds.lower(i) > bounds.upper(i))
      throw InputError("bounds are inverted at " + ParameterSet::names()[i]);

  std::vector<int> free_idx;
  for (int i = 0; i < ParameterSet::kCount; ++i)
    if (!bounds.frozen(i)) free_idx.push_back(i);
  const int nf = static_cast<int>(free_idx.size());

  if (static_cast<int>(observations.size()) * 3 < nf)
    throw InputError("too few observation records for the free parameters");

  const auto project = [&](Eigen::VectorXd x) {
    for (int i = 0; i < ParameterSet::kCount; ++i)
      x(i) = std::clamp(x(i), bounds.lower(i), bounds.upper(i));
    return x;
  };

  Eigen::VectorXd x = init.pack();
  for (int i = 0; i < ParameterSet::kCount; ++i)
    if (x(i) < bounds.lower(i) - 1e-12 || x(i) > bounds.upper(i) + 1e-12)
      throw InputError("initial guess outside bounds at " +
                       ParameterSet::names()[i]);
  x = project(x);

  ResidualEval ev =
      eval_residuals(tmpl, ParameterSet::unpack(x), observations, loads,
                     opts.solver);
  if (ev.used.empty())
    throw AllRecordsFailedError("no observation record could be solved");
  double msr = mean_square(ev);

  const auto fd_jacobian = [&](const Eigen::VectorXd& at,
                               const ResidualEval& base) {
    Eigen::MatrixXd jac(base.r.size(), nf);
    for (int c = 0; c < nf; ++c) {
      const int j = free_idx[c];
      const double h =
          opts.fd_relative_step * std::max(std::abs(at(j)), opts.fd_floor);
      Eigen::VectorXd xp = at, xm = at;
      xp(j) += h;
      xm(j) -= h;
      const ResidualEval evp = eval_residuals(
          tmpl, ParameterSet::unpack(xp), observations, loads, opts.solver);
      const ResidualEval evm = eval_residuals(
          tmpl, ParameterSet::unpack(xm), observations, loads, opts.solver);
      if (evp.used == base.used && evm.used == base.used) {
        jac.col(c) = (evp.r - evm.r) / (2.0 * h);
      } else {
        // fall back to whatever matches; zero where nothing does
        jac.col(c).setZero();
        if (evp.used == base.used) jac.col(c) = (evp.r - base.r) / h;
        if (evm.used == base.used) jac.col(c) = (base.r - evm.r) / h;
      }
    }
    return jac;
  };

  FitResult result;
  double lambda = opts.initial_lambda;
  bool converged = false;
  int iter = 0;
  Eigen::MatrixXd jac;
  bool jac_fresh = false;

  while (iter < opts.max_iterations) {
    ++iter;
    if (!jac_fresh) jac = fd_jacobian(x, ev);
    jac_fresh = true;

    const Eigen::VectorXd grad = jac.transpose() * ev.r;
    if (grad.norm() < opts.gradient_tolerance) {
      converged = true;
      break;
    }

    Eigen::MatrixXd gram = jac.transpose() * jac;
    Eigen::VectorXd damp = gram.diagonal().cwiseMax(1e-12);
    gram.diagonal() += lambda * damp;
    const Eigen::VectorXd dx_free = gram.ldlt().solve(-grad);

    Eigen::VectorXd x_trial = x;
    for (int c = 0; c < nf; ++c) x_trial(free_idx[c]) += dx_free(c);
    x_trial = project(x_trial);
    const double step_norm = (x_trial - x).norm();
    if (step_norm < opts.step_tolerance) {
      converged = true;
      break;
    }

    const ResidualEval ev_trial = eval_residuals(
        tmpl, ParameterSet::unpack(x_trial), observations, loads, opts.solver);
    const double msr_trial = mean_square(ev_trial);
    // A step that makes previously solvable records fail is a rejection no
    // matter how small the surviving residuals look.
    const bool keeps_records =
        std::includes(ev_trial.used.begin(), ev_trial.used.end(),
                      ev.used.begin(), ev.used.end());
    if (!ev_trial.used.empty() && keeps_records && msr_trial < msr) {
      x = x_trial;
      ev = ev_trial;
      msr = msr_trial;
      lambda = std::max(lambda * opts.lambda_down, 1e-14);
      jac_fresh = false;
    } else {
      lambda *= opts.lambda_up;
      if (lambda > opts.max_lambda) break;
    }
  }

  if (!jac_fresh) jac = fd_jacobian(x, ev);
  result.packed = x;
  result.params = ParameterSet::unpack(x);
  result.residual_rmse = std::sqrt(msr);
  result.iterations = iter;
  result.converged = converged;
  result.failed_records = ev.failed;

  result.confidence = Eigen::VectorXd::Zero(ParameterSet::kCount);
  if (nf > 0) {
    const Eigen::MatrixXd gram = jac.transpose() * jac;
    const Eigen::MatrixXd pinv =
        gram.completeOrthogonalDecomposition().pseudoInverse();
    for (int c = 0; c < nf; ++c)
      result.confidence(free_idx[c]) = pinv(c, c);
  }
  return result;
}

std::vector<ActuationInput> make_three_sweep_protocol(const CatheterSpec& spec,
                                                      int points_per_sweep,
                                                      double max_current) {
  require_valid(spec);
  if (points_per_sweep < 2)
    throw InputError("need at least two points per sweep");
  if (max_current <= 0.0 || max_current > spec.current_limit)
    throw InputError("sweep current outside the hardware limit");
  const int nc = 3 * spec.actuator_count();
  std::vector<ActuationInput> inputs;
  inputs.reserve(3 * static_cast<std::size_t>(points_per_sweep));
  for (int coil = 0; coil < 3; ++coil) {
    for (int k = 0; k < points_per_sweep; ++k) {
      ActuationInput in;
      in.currents = Eigen::VectorXd::Zero(nc);
      in.currents(coil) =
          -max_current + 2.0 * max_current * k / (points_per_sweep - 1);
      in.inserted_length = spec.total_length();
      inputs.push_back(in);
    }
  }
  return inputs;
}

ObservationSet synthesize_observations(const CatheterSpec& spec,
                                       const ExternalLoads& loads,
                                       const std::vector<ActuationInput>& inputs,
                                       double noise_sigma, std::mt19937_64& rng,
                                       const SolverOptions& solver) {
  if (noise_sigma < 0.0) throw InputError("noise sigma must be nonnegative");
  std::normal_distribution<double> gauss(0.0, 1.0);
  ObservationSet obs;
  obs.reserve(inputs.size());
  Eigen::Vector3d warm = Eigen::Vector3d::Zero();
  for (const auto& in : inputs) {
    BvpSolution sol = solve_bvp(spec, loads, in, warm, solver);
    if (!sol.converged)
      throw ConvergenceError("synthetic observation did not converge",
                             sol.residual_norm);
    warm = sol.u0;
    ObservationRecord rec;
    rec.input = in;
    rec.p_obs = sol.ivp.tip.p;
    if (noise_sigma > 0.0)
      rec.p_obs += noise_sigma *
                   Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    obs.push_back(rec);
  }
  return obs;
}

ObservationSet read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open observations file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw InputError("observations file is empty: " + path);

  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };

  const auto header = split(line);
  if (header.size() < 8 || header.front() != "record_id")
    throw InputError("observations header must be record_id,i1..iN,insert_mm,"
                     "px,py,pz");
  const int nc = static_cast<int>(header.size()) - 5;
  for (int i = 0; i < nc; ++i)
    if (header[1 + i] != "i" + std::to_string(i + 1))
      throw InputError("observations header current columns must be i1..iN");
  if (header[1 + nc] != "insert_mm" || header[2 + nc] != "px" ||
      header[3 + nc] != "py" || header[4 + nc] != "pz")
    throw InputError("observations header must end insert_mm,px,py,pz");
  if (nc % 3 != 0)
    throw InputError("current columns must come in sets of three");

  ObservationSet obs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != 5 + nc)
      throw InputError("observations line " + std::to_string(line_no) +
                       " has wrong column count");
    ObservationRecord rec;
    rec.input.currents = Eigen::VectorXd(nc);
    try {
      for (int i = 0; i < nc; ++i)
        rec.input.currents(i) = std::stod(cells[1 + i]);
      rec.input.inserted_length = std::stod(cells[1 + nc]);
      for (int i = 0; i < 3; ++i)
        rec.p_obs(i) = std::stod(cells[2 + nc + i]);
    } catch (const std::exception&) {
      throw InputError("observations line " + std::to_string(line_no) +
                       " has a malformed number");
    }
    obs.push_back(rec);
  }
  return obs;
}

void write_observations_csv(const std::string& path, const ObservationSet& obs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write observations file: " + path);
  const int nc = obs.empty() ? 3 : static_cast<int>(obs.front().input.currents.size());
  out << "record_id";
  for (int i = 0; i < nc; ++i) out << ",i" << (i + 1);
  out << ",insert_mm,px,py,pz\n";
  out.precision(17);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    out << k;
    for (int i = 0; i < nc; ++i) out << ',' << obs[k].input.currents(i);
    out << ',' << obs[k].input.inserted_length;
    for (int i = 0; i < 3; ++i) out << ',' << obs[k].p_obs(i);
    out << '\n';
  }
  if (!out) throw InputError("failed writing observations file: " + path);
}

}  // namespace magcath
