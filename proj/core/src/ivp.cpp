#include "magcath/ivp.hpp"

#include <cmath>

#include "magcath/magnetics.hpp"
#include "magcath/so3.hpp"

namespace magcath {

namespace {

inline Eigen::Vector3d e3_cross(const Eigen::Vector3d& v) {
  return {-v.y(), v.x(), 0.0};
}

struct Span {
  bool flexible = false;
  double s0 = 0.0, s1 = 0.0;  // rod coordinates
  const FlexibleSegment* flex = nullptr;
  const RigidSegment* rigid = nullptr;
  int actuator_index = -1;           // index into the catheter's actuator list
  bool coil_mass_active = false;     // coil midpoint inside the active window
  const FlexibleSegment* prev_flex = nullptr;
  const FlexibleSegment* next_flex = nullptr;
  Eigen::Vector3d f_end = Eigen::Vector3d::Zero();        // f_cum at s1
  Eigen::Vector3d weight_per_len = Eigen::Vector3d::Zero();  // N/mm
};

std::vector<Span> build_active_spans(const CatheterSpec& spec,
                                     const ExternalLoads& loads,
                                     double inserted_length) {
  const double total = spec.total_length();
  if (inserted_length <= 0.0 || inserted_length > total + 1e-9) {
    throw InputError("inserted_length must lie in (0, total_length]");
  }
  const double window_start = total - inserted_length;
  const double gravity_force = kNewtonPerKgMmS2 * spec.mass_scale;

  std::vector<Span> spans;
  double m0 = 0.0;
  int actuator_index = -1;
  for (const auto& seg : spec.segments) {
    const double len = std::visit([](const auto& x) { return x.length; }, seg);
    const double m1 = m0 + len;
    const auto* rigid = std::get_if<RigidSegment>(&seg);
    if (rigid && rigid->actuator) ++actuator_index;
    const double lo = std::max(m0, window_start);
    if (m1 - lo > 1e-12) {
      Span span;
      span.s0 = lo - window_start;
      span.s1 = m1 - window_start;
      if (const auto* flex = std::get_if<FlexibleSegment>(&seg)) {
        span.flexible = true;
        span.flex = flex;
        span.weight_per_len =
            flex->mass_per_length * gravity_force * loads.gravity;
      } else {
        span.rigid = rigid;
        if (rigid->actuator) {
          span.actuator_index = actuator_index;
          span.coil_mass_active = (m0 + m1) / 2.0 >= window_start;
        }
      }
      spans.push_back(span);
    }
    m0 = m1;
  }

  const FlexibleSegment* prev = nullptr;
  for (auto& span : spans) {
    if (span.flexible) {
      prev = span.flex;
    } else {
      span.prev_flex = prev;
    }
  }
  const FlexibleSegment* next = nullptr;
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (it->flexible) {
      next = it->flex;
    } else {
      it->next_flex = next;
    }
  }

  Eigen::Vector3d f = loads.f_tip;
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (it->flexible) {
      it->f_end = f;
      f += it->weight_per_len * (it->s1 - it->s0);
    } else if (it->rigid->actuator && it->coil_mass_active) {
      f += it->rigid->actuator->coil_mass * gravity_force * loads.gravity;
    }
  }
  return spans;
}

struct OdeState {
  Eigen::Vector3d p;
  Eigen::Matrix3d R;
  Eigen::Vector3d u;
  Eigen::Matrix3Xd dp, du, w;

  void resize_derivs(int n) {
    dp.setZero(3, n);
    du.setZero(3, n);
    w.setZero(3, n);
  }
};

// out = y + a * k, applied to every propagated block.
void axpy(const OdeState& y, double a, const OdeState& k, OdeState& out) {
  out.p = y.p + a * k.p;
  out.R = y.R + a * k.R;
  out.u = y.u + a * k.u;
  if (y.dp.cols() > 0) {
    out.dp = y.dp + a * k.dp;
    out.du = y.du + a * k.du;
    out.w = y.w + a * k.w;
  }
}

struct RhsContext {
  const Span* span = nullptr;
  Eigen::Vector3d kdiag, kinv, ustar;
  Eigen::Vector3d moment_density;
  bool has_moment_density = false;
  int n_cols = 0;
  int f_tip_offset = -1;
};

void rhs(const OdeState& y, double s, const RhsContext& ctx, OdeState& k) {
  const Span& span = *ctx.span;
  const Eigen::Vector3d f_cum =
      span.f_end + span.weight_per_len * (span.s1 - s);

  k.p = y.R.col(2);
  k.R.noalias() = y.R * so3::hat(y.u);
  const Eigen::Vector3d elastic =
      y.u.cross(ctx.kdiag.cwiseProduct(y.u - ctx.ustar));
  Eigen::Vector3d m = elastic + e3_cross(y.R.transpose() * f_cum);
  if (ctx.has_moment_density) m += y.R.transpose() * ctx.moment_density;
  k.u = -ctx.kinv.cwiseProduct(m);

  if (ctx.n_cols == 0) return;

  const Eigen::Matrix3d A =
      curvature_state_jacobian(ctx.kdiag, ctx.ustar, y.u);
  const Eigen::Vector3d tangent = y.R.col(2);
  for (int j = 0; j < ctx.n_cols; ++j) {
    const Eigen::Vector3d wj = y.w.col(j);
    k.dp.col(j) = wj.cross(tangent);
    k.w.col(j).noalias() = y.R * y.du.col(j);
    Eigen::Vector3d rot = e3_cross(y.R.transpose() * wj.cross(f_cum));
    if (ctx.has_moment_density) {
      rot += y.R.transpose() * wj.cross(ctx.moment_density);
    }
    k.du.col(j) = A * y.du.col(j) + ctx.kinv.cwiseProduct(rot);
  }
  if (ctx.f_tip_offset >= 0) {
    // Direct dependence of the curvature equation on the tip force.
    const Eigen::Matrix3d Rt = y.R.transpose();
    for (int i = 0; i < 3; ++i) {
      k.du.col(ctx.f_tip_offset + i) -=
          ctx.kinv.cwiseProduct(e3_cross(Rt.col(i)));
    }
  }
}

}  // namespace

Eigen::Vector3d curvature_rhs(const Eigen::Vector3d& stiffness,
                              const Eigen::Vector3d& rest_curvature,
                              const Eigen::Matrix3d& R, const Eigen::Vector3d& u,
                              const Eigen::Vector3d& f_cum,
                              const Eigen::Vector3d& moment_density) {
  const Eigen::Vector3d m =
      u.cross(stiffness.cwiseProduct(u - rest_curvature)) +
      e3_cross(R.transpose() * f_cum) + R.transpose() * moment_density;
  return -stiffness.cwiseInverse().cwiseProduct(m);
}

Eigen::Matrix3d curvature_state_jacobian(const Eigen::Vector3d& stiffness,
                                         const Eigen::Vector3d& rest_curvature,
                                         const Eigen::Vector3d& u) {
  const Eigen::Matrix3d m =
      so3::hat(stiffness.cwiseProduct(u)) -
      so3::hat(stiffness.cwiseProduct(rest_curvature)) -
      so3::hat(u) * stiffness.asDiagonal();
  return stiffness.cwiseInverse().asDiagonal() * m;
}

Eigen::Vector3d rigid_curvature_transfer(const Eigen::Vector3d& k_minus,
                                         const Eigen::Vector3d& ustar_minus,
                                         const Eigen::Vector3d& k_plus,
                                         const Eigen::Vector3d& ustar_plus,
                                         const Eigen::Vector3d& u,
                                         const Eigen::Vector3d& tau) {
  const Eigen::Vector3d moment = k_minus.cwiseProduct(u - ustar_minus) - tau;
  return ustar_plus + k_plus.cwiseInverse().cwiseProduct(moment);
}

Eigen::Vector3d f_cumulative(const CatheterSpec& spec, const ExternalLoads& loads,
                             double inserted_length, double s) {
  if (s < -1e-12 || s > inserted_length + 1e-12) {
    throw InputError("rod coordinate outside [0, inserted_length]");
  }
  const auto spans = build_active_spans(spec, loads, inserted_length);
  for (const auto& span : spans) {
    if (span.flexible && s >= span.s0 - 1e-12 && s <= span.s1 + 1e-12) {
      const double clamped = std::clamp(s, span.s0, span.s1);
      return span.f_end + span.weight_per_len * (span.s1 - clamped);
    }
  }
  // Inside a rigid span: the carried force equals the force at its distal end.
  Eigen::Vector3d f = loads.f_tip;
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (it->s1 <= s + 1e-12) break;
    if (it->flexible) {
      f += it->weight_per_len * (it->s1 - std::max(s, it->s0));
    } else if (it->rigid->actuator && it->coil_mass_active &&
               (it->s0 + it->s1) / 2.0 > s) {
      f += it->rigid->actuator->coil_mass * kNewtonPerKgMmS2 *
           spec.mass_scale * loads.gravity;
    }
  }
  return f;
}

IvpResult integrate_ivp(const CatheterSpec& spec, const ExternalLoads& loads,
                        const ActuationInput& input, const Eigen::Vector3d& u0,
                        const IntegratorOptions& opts,
                        const ParamLayout* layout) {
  require_valid(spec);
  if (input.currents.size() != 3 * spec.actuator_count()) {
    throw InputError("currents vector must hold 3 entries per actuator");
  }
  if (opts.steps_per_mm <= 0.0) {
    throw InputError("steps_per_mm must be positive");
  }
  const auto spans = build_active_spans(spec, loads, input.inserted_length);

  bool any_flexible = false;
  for (const auto& span : spans) any_flexible |= span.flexible;
  if (!any_flexible) {
    throw InputError("inserted length leaves no flexible segment active");
  }

  const int n_cols = layout ? layout->size() : 0;
  const int f_tip_off = layout ? layout->f_tip_offset() : -1;

  OdeState y;
  y.p = spec.base.p;
  y.R = spec.base.R;
  y.u = u0;
  y.resize_derivs(n_cols);
  if (layout && layout->u0_offset() >= 0) {
    y.du.block<3, 3>(0, layout->u0_offset()).setIdentity();
  }
  if (layout && layout->p0_offset() >= 0) {
    y.dp.block<3, 3>(0, layout->p0_offset()).setIdentity();
  }

  IvpResult result;
  auto record = [&](double s) {
    if (opts.record_trace) result.trace.push_back({s, y.p, y.R, y.u});
  };
  record(0.0);

  OdeState k1, k2, k3, k4, tmp;
  for (OdeState* st : {&k1, &k2, &k3, &k4, &tmp}) st->resize_derivs(n_cols);

  const FlexibleSegment* last_flex = nullptr;
  for (const auto& span : spans) {
    if (span.flexible) {
      last_flex = span.flex;
      RhsContext ctx;
      ctx.span = &span;
      ctx.kdiag = span.flex->stiffness;
      ctx.kinv = ctx.kdiag.cwiseInverse();
      ctx.ustar = span.flex->rest_curvature;
      ctx.moment_density = loads.moment_density;
      ctx.has_moment_density = !loads.moment_density.isZero();
      ctx.n_cols = n_cols;
      ctx.f_tip_offset = f_tip_off;

      const double len = span.s1 - span.s0;
      const int n_steps =
          std::max(1, static_cast<int>(std::ceil(len * opts.steps_per_mm - 1e-9)));
      const double h = len / n_steps;
      double s = span.s0;
      for (int step = 0; step < n_steps; ++step) {
        rhs(y, s, ctx, k1);
        axpy(y, h / 2.0, k1, tmp);
        rhs(tmp, s + h / 2.0, ctx, k2);
        axpy(y, h / 2.0, k2, tmp);
        rhs(tmp, s + h / 2.0, ctx, k3);
        axpy(y, h, k3, tmp);
        rhs(tmp, s + h, ctx, k4);

        const double w6 = h / 6.0;
        y.p += w6 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
        y.R = so3::project(y.R + w6 * (k1.R + 2.0 * k2.R + 2.0 * k3.R + k4.R));
        y.u += w6 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);
        if (n_cols > 0) {
          y.dp += w6 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
          y.du += w6 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
          y.w += w6 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w);
        }
        s = (step + 1 == n_steps) ? span.s1 : s + h;
        record(s);
      }
      if (!y.p.allFinite() || !y.u.allFinite()) {
        throw NonFiniteError("rod state diverged during integration");
      }
    } else {
      const double len = span.s1 - span.s0;
      const Actuator* act =
          span.rigid->actuator ? &*span.rigid->actuator : nullptr;

      Eigen::Vector3d tau = Eigen::Vector3d::Zero();
      Eigen::Matrix3d dtau_dz = Eigen::Matrix3d::Zero();
      if (act && span.prev_flex != nullptr) {
        tau = actuator_moment(*act, y.R, loads.field,
                              input.coil_currents(span.actuator_index));
        if (n_cols > 0) {
          dtau_dz = moment_current_jacobian(*act, y.R, loads.field);
        }
      }

      // Moment sensitivities before the frame advances (the coil sits in the
      // frame at the proximal junction, which the rigid body carries along).
      Eigen::Matrix3Xd dtau(3, n_cols > 0 ? n_cols : 0);
      if (n_cols > 0 && act && span.prev_flex != nullptr) {
        for (int j = 0; j < n_cols; ++j) {
          dtau.col(j) = moment_rotation_derivative(
              *act, y.R, loads.field, input.coil_currents(span.actuator_index),
              y.w.col(j));
        }
        const int zoff = layout->currents_offset(span.actuator_index);
        if (zoff >= 0) {
          for (int i = 0; i < 3; ++i) dtau.col(zoff + i) += dtau_dz.col(i);
        }
      } else if (n_cols > 0) {
        dtau.setZero();
      }

      const Eigen::Vector3d tangent = y.R.col(2);
      y.p += len * tangent;
      for (int j = 0; j < n_cols; ++j) {
        y.dp.col(j) += len * y.w.col(j).cross(tangent);
      }

      if (span.next_flex != nullptr && span.prev_flex != nullptr) {
        const Eigen::Vector3d km = span.prev_flex->stiffness;
        const Eigen::Vector3d kp = span.next_flex->stiffness;
        const Eigen::Vector3d kp_inv = kp.cwiseInverse();
        y.u = rigid_curvature_transfer(km, span.prev_flex->rest_curvature, kp,
                                       span.next_flex->rest_curvature, y.u, tau);
        for (int j = 0; j < n_cols; ++j) {
          y.du.col(j) =
              kp_inv.cwiseProduct(km.cwiseProduct(y.du.col(j)) - dtau.col(j));
        }
      } else if (span.next_flex == nullptr && act && span.prev_flex != nullptr) {
        result.l_tip = tau;
        result.tip_actuated = true;
        if (n_cols > 0) {
          result.derivs.emplace();  // placeholder, filled below
          result.derivs->dl_tip = dtau;
        }
      }
      record(span.s1);
    }
  }

  result.tip = {input.inserted_length, y.p, y.R, y.u};
  result.tip_stiffness = last_flex->stiffness;
  result.tip_rest_curvature = last_flex->rest_curvature;
  if (n_cols > 0) {
    if (!result.derivs) result.derivs.emplace();
    result.derivs->dp = y.dp;
    result.derivs->du = y.du;
    result.derivs->w = y.w;
    if (result.derivs->dl_tip.cols() != n_cols) {
      result.derivs->dl_tip.setZero(3, n_cols);
    }
    if (!y.dp.allFinite() || !y.du.allFinite() || !y.w.allFinite()) {
      throw NonFiniteError("sensitivity blocks diverged during integration");
    }
  }
  if (!result.tip.p.allFinite() || !result.tip.u.allFinite() ||
      !result.tip.R.allFinite()) {
    throw NonFiniteError("rod state diverged during integration");
  }
  return result;
}

}  // namespace magcath
