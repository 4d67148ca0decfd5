#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "adjointlab/adjoint_system.hpp"
#include "adjointlab/dense.hpp"
#include "adjointlab/one_step.hpp"
#include "adjointlab/pairing.hpp"

// Trajectory-level drivers: forward/variational integration, cotangent-lift
// backpropagation (optionally under a non-standard pairing), the adaptive
// forward Euler method with a differentiable step controller, and the
// variational-equivariance residual used for the adaptive counterexample.

namespace adjlab {

/// Time partial D₁g of a non-autonomous right-hand side g(t, y); empty means
/// autonomous (zero).
using TimePartialFn = std::function<Vec(double, const Vec&)>;

struct TrajectoryBundle {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> variations;          // empty unless requested
  std::vector<Vec> adjoints;            // empty unless backpropagated
  std::vector<double> invariant_series; // pair(p_n, δq_n) when both exist
  std::vector<double> controller_steps; // adaptive runs: controller h_n per step

  std::size_t n_steps() const { return times.empty() ? 0 : times.size() - 1; }

  void validate() const {
    if (times.size() != states.size()) {
      throw std::invalid_argument("TrajectoryBundle: times/states length mismatch");
    }
    if (!variations.empty() && variations.size() != times.size()) {
      throw std::invalid_argument("TrajectoryBundle: variations length mismatch");
    }
    if (!adjoints.empty() && adjoints.size() != times.size()) {
      throw std::invalid_argument("TrajectoryBundle: adjoints length mismatch");
    }
    for (std::size_t n = 0; n + 1 < times.size(); ++n) {
      if (!(times[n] < times[n + 1])) {
        throw std::invalid_argument("TrajectoryBundle: times must strictly increase");
      }
    }
  }
};

namespace detail {

[[noreturn]] inline void rethrow_at_step(const NumericalError& e, std::size_t step) {
  throw NumericalError(std::string(e.what()) + " (at step " + std::to_string(step) + ")",
                       static_cast<long>(step));
}

}  // namespace detail

/// Fixed-step forward integration; stores the state at every node.
inline TrajectoryBundle integrate_forward(const OneStepMethod& method, const RhsFn& rhs,
                                          const Vec& y0, double t0, double tf, int n_steps,
                                          const JacFn& jac = {}) {
  if (n_steps < 1) throw std::invalid_argument("integrate_forward: n_steps must be >= 1");
  if (!(tf > t0)) throw std::invalid_argument("integrate_forward: need tf > t0");
  require_finite(y0, "integrate_forward: y0");
  const double h = (tf - t0) / n_steps;
  TrajectoryBundle out;
  out.times.reserve(n_steps + 1);
  out.states.reserve(n_steps + 1);
  out.times.push_back(t0);
  out.states.push_back(y0);
  for (int n = 0; n < n_steps; ++n) {
    const double t = t0 + n * h;
    try {
      Vec next = jac ? method.step(rhs, jac, t, out.states.back(), h)
                     : method.step(rhs, t, out.states.back(), h);
      if (!next.allFinite()) {
        throw NumericalError("integrate_forward: non-finite state");
      }
      out.states.push_back(std::move(next));
    } catch (const NumericalError& e) {
      detail::rethrow_at_step(e, static_cast<std::size_t>(n));
    }
    out.times.push_back(n + 1 == n_steps ? tf : t0 + (n + 1) * h);
  }
  return out;
}

/// Forward + tangent integration: variations[n] follows the tangent lift of
/// the step map along the stored states.
inline TrajectoryBundle integrate_variational(const OneStepMethod& method, const RhsFn& rhs,
                                              const JacFn& jac, const Vec& y0, const Vec& dy0,
                                              double t0, double tf, int n_steps) {
  TrajectoryBundle out = integrate_forward(method, rhs, y0, t0, tf, n_steps, jac);
  out.variations.reserve(out.times.size());
  out.variations.push_back(dy0);
  for (std::size_t n = 0; n + 1 < out.times.size(); ++n) {
    const double h = out.times[n + 1] - out.times[n];
    try {
      out.variations.push_back(
          method.tangent_step(rhs, jac, out.times[n], out.states[n], out.variations[n], h));
    } catch (const NumericalError& e) {
      detail::rethrow_at_step(e, n);
    }
  }
  return out;
}

inline TrajectoryBundle integrate_variational(const OneStepMethod& method,
                                              const VariationalSystem& variational,
                                              const Vec& y0, const Vec& dy0, double t0,
                                              double tf, int n_steps) {
  return integrate_variational(method, variational.ode().rhs_fn(), variational.ode().jac_fn(),
                               y0, dy0, t0, tf, n_steps);
}

/// Cotangent-lift backpropagation p_{n+1} -> p_n along a stored forward
/// trajectory. Under a pairing P the lift is the similarity-conjugated
/// standard lift, p_n = P⁻ᵀ [DΦ]ᵀ Pᵀ p_{n+1}. Fills adjoints (and the
/// invariant series when the bundle carries variations).
inline TrajectoryBundle backpropagate(const OneStepMethod& method, const RhsFn& rhs,
                                      const JacFn& jac, TrajectoryBundle forward,
                                      const Vec& p_terminal,
                                      std::optional<DualityPairing> pairing = std::nullopt) {
  forward.validate();
  if (forward.states.empty()) {
    throw std::invalid_argument("backpropagate: forward trajectory has no stored states");
  }
  require_dim(p_terminal.size(), forward.states.front().size(), "backpropagate: p_terminal");
  const std::size_t n_total = forward.n_steps();
  const bool standard = !pairing || pairing->is_standard();

  forward.adjoints.assign(forward.times.size(), Vec());
  forward.adjoints[n_total] = p_terminal;
  for (std::size_t n = n_total; n-- > 0;) {
    const double h = forward.times[n + 1] - forward.times[n];
    const Vec& p_next = forward.adjoints[n + 1];
    try {
      if (standard) {
        forward.adjoints[n] =
            method.cotangent_step(rhs, jac, forward.times[n], forward.states[n], p_next, h);
      } else {
        Vec w = pairing->apply_transpose(p_next);
        Vec lifted =
            method.cotangent_step(rhs, jac, forward.times[n], forward.states[n], w, h);
        forward.adjoints[n] = pairing->solve_transpose(lifted);
      }
    } catch (const NumericalError& e) {
      detail::rethrow_at_step(e, n);
    }
  }

  if (!forward.variations.empty()) {
    const DualityPairing inv_pairing =
        pairing ? *pairing : DualityPairing::standard(p_terminal.size());
    forward.invariant_series.resize(forward.times.size());
    for (std::size_t n = 0; n < forward.times.size(); ++n) {
      forward.invariant_series[n] =
          inv_pairing.pair(forward.adjoints[n], forward.variations[n]);
    }
  }
  return forward;
}

/// Max deviation of a conserved series from its first entry, relative to the
/// series magnitude.
inline double relative_drift(const std::vector<double>& series) {
  if (series.empty()) throw std::invalid_argument("relative_drift: empty series");
  const double ref = series.front();
  double drift = 0.0;
  double scale = std::abs(ref);
  for (double v : series) {
    drift = std::max(drift, std::abs(v - ref));
    scale = std::max(scale, std::abs(v));
  }
  return drift / std::max(scale, 1e-300);
}

// ---------------------------------------------------------------------------
// Adaptive forward Euler
// ---------------------------------------------------------------------------

/// y_{n+1} = y_n + h_n g(s_n, y_n), s_{n+1} = s_n + h_n,
/// h_{n+1} = S(y_n, h_n, s_n); the final step is truncated to land on tf.
/// controller_steps records the controller's h_n (pre-truncation).
inline TrajectoryBundle integrate_adaptive_euler(const AdaptiveController& controller,
                                                 const RhsFn& rhs, const Vec& y0, double t0,
                                                 double tf, double h0,
                                                 std::size_t max_steps = 1000000) {
  if (!(h0 > 0.0)) throw std::invalid_argument("integrate_adaptive_euler: h0 must be > 0");
  if (!(tf > t0)) throw std::invalid_argument("integrate_adaptive_euler: need tf > t0");
  require_finite(y0, "integrate_adaptive_euler: y0");

  TrajectoryBundle out;
  out.times.push_back(t0);
  out.states.push_back(y0);
  double h = h0;
  const double t_eps = 1e-12 * std::max(1.0, std::abs(tf - t0));
  while (out.times.back() < tf - t_eps) {
    if (out.n_steps() >= max_steps) {
      throw NumericalError("integrate_adaptive_euler: exceeded " + std::to_string(max_steps) +
                           " steps before reaching tf",
                           static_cast<long>(out.n_steps()));
    }
    const double s = out.times.back();
    const Vec y = out.states.back();  // copy: push_back below reallocates
    const bool truncated = s + h > tf;
    const double h_use = truncated ? tf - s : h;
    out.controller_steps.push_back(h);
    out.states.push_back(y + h_use * rhs(s, y));
    if (!out.states.back().allFinite()) {
      throw NumericalError("integrate_adaptive_euler: non-finite state",
                           static_cast<long>(out.n_steps() - 1));
    }
    out.times.push_back(truncated ? tf : s + h_use);
    h = controller.next_step(y, h, s);
  }
  return out;
}

namespace detail {

inline Vec time_partial_or_zero(const TimePartialFn& gt, double t, const Vec& y) {
  if (gt) return gt(t, y);
  return Vec::Zero(y.size());
}

}  // namespace detail

/// Exact linearization of the adaptive Euler recurrence (the variational
/// system *of the method*): carries (δy, δs, δh) with
///   δy' = δy + h (D₁g δs + D₂g δy) + δh_use g,
///   δs' = δs + δh_use,
///   δh' = D₁S δy + D₂S δh + D₃S δs,
/// where δh_use = δh except at the truncated final step, whose step size
/// tf - s contributes δh_use = -δs (and δs' = 0 since s' ≡ tf).
struct AdaptiveVariationalTrajectory {
  TrajectoryBundle base;            // states/times/controller_steps
  std::vector<Vec> dy;
  std::vector<double> ds;
  std::vector<double> dh;           // aligned with controller_steps (per step)
};

inline AdaptiveVariationalTrajectory adaptive_variational_lifted(
    const AdaptiveController& controller, const RhsFn& rhs, const JacFn& jac,
    const TimePartialFn& gt, const Vec& y0, const Vec& dy0, double t0, double tf, double h0,
    std::size_t max_steps = 1000000) {
  AdaptiveVariationalTrajectory out;
  out.base = integrate_adaptive_euler(controller, rhs, y0, t0, tf, h0, max_steps);
  const std::size_t n_total = out.base.n_steps();
  out.dy.reserve(n_total + 1);
  out.ds.reserve(n_total + 1);
  out.dh.reserve(n_total + 1);
  out.dy.push_back(dy0);
  out.ds.push_back(0.0);
  out.dh.push_back(0.0);  // h0 is a fixed parameter, not a perturbed state
  for (std::size_t n = 0; n < n_total; ++n) {
    const double s = out.base.times[n];
    const Vec& y = out.base.states[n];
    const double h_ctrl = out.base.controller_steps[n];
    const double h_use = out.base.times[n + 1] - out.base.times[n];
    const bool truncated = n + 1 == n_total && h_ctrl > h_use;

    const Vec g = rhs(s, y);
    const Mat j = jac(s, y);
    const Vec g_s = detail::time_partial_or_zero(gt, s, y);

    const double dh_use = truncated ? -out.ds[n] : out.dh[n];
    Vec dy_next = out.dy[n] + h_use * (g_s * out.ds[n] + j * out.dy[n]) + dh_use * g;
    const double ds_next = truncated ? 0.0 : out.ds[n] + dh_use;
    const double dh_next = controller.d_state(y, h_ctrl, s).dot(out.dy[n]) +
                           controller.d_step(y, h_ctrl, s) * out.dh[n] +
                           controller.d_time(y, h_ctrl, s) * out.ds[n];
    out.dy.push_back(std::move(dy_next));
    out.ds.push_back(ds_next);
    out.dh.push_back(dh_next);
  }
  return out;
}

/// The adaptive Euler method applied to the continuous variational system
/// (y, s, δy, δs): same state/step sequences, but the δh coupling is absent.
inline AdaptiveVariationalTrajectory adaptive_euler_of_variational(
    const AdaptiveController& controller, const RhsFn& rhs, const JacFn& jac,
    const TimePartialFn& gt, const Vec& y0, const Vec& dy0, double t0, double tf, double h0,
    std::size_t max_steps = 1000000) {
  AdaptiveVariationalTrajectory out;
  out.base = integrate_adaptive_euler(controller, rhs, y0, t0, tf, h0, max_steps);
  const std::size_t n_total = out.base.n_steps();
  out.dy.push_back(dy0);
  out.ds.push_back(0.0);
  for (std::size_t n = 0; n < n_total; ++n) {
    const double s = out.base.times[n];
    const Vec& y = out.base.states[n];
    const double h_use = out.base.times[n + 1] - out.base.times[n];
    const Vec g_s = detail::time_partial_or_zero(gt, s, y);
    out.dy.push_back(Vec(out.dy[n] + h_use * (g_s * out.ds[n] + jac(s, y) * out.dy[n])));
    out.ds.push_back(out.ds[n]);
  }
  return out;
}

/// Max product-norm gap between the variational system of the method and the
/// method applied to the continuous variational system. Zero (to roundoff)
/// exactly when the method is variationally equivariant.
inline double variational_equivariance_residual(const OneStepMethod& method, const RhsFn& rhs,
                                                const JacFn& jac, const Vec& y0, const Vec& dy0,
                                                double t0, double tf, int n_steps) {
  TrajectoryBundle lifted = integrate_variational(method, rhs, jac, y0, dy0, t0, tf, n_steps);

  // Same method on the augmented ODE d/dt (y, δy) = (g, J δy).
  const Index n = y0.size();
  RhsFn aug_rhs = [&rhs, &jac, n](double t, const Vec& u) {
    Vec y = u.head(n);
    Vec out(2 * n);
    out.head(n) = rhs(t, y);
    out.tail(n) = jac(t, y) * u.tail(n);
    return out;
  };
  Vec u0(2 * n);
  u0 << y0, dy0;
  TrajectoryBundle aug = integrate_forward(method, aug_rhs, u0, t0, tf, n_steps);

  double residual = 0.0;
  for (std::size_t k = 0; k < lifted.times.size(); ++k) {
    Vec diff(2 * n);
    diff.head(n) = lifted.states[k] - aug.states[k].head(n);
    diff.tail(n) = lifted.variations[k] - aug.states[k].tail(n);
    residual = std::max(residual, diff.norm());
  }
  return residual;
}

/// Adaptive counterpart: compares the two pipelines above in the
/// state-plus-variation product norm (the shared (y, s) block cancels).
inline double adaptive_variational_equivariance_residual(
    const AdaptiveController& controller, const RhsFn& rhs, const JacFn& jac,
    const TimePartialFn& gt, const Vec& y0, const Vec& dy0, double t0, double tf, double h0) {
  AdaptiveVariationalTrajectory a =
      adaptive_variational_lifted(controller, rhs, jac, gt, y0, dy0, t0, tf, h0);
  AdaptiveVariationalTrajectory b =
      adaptive_euler_of_variational(controller, rhs, jac, gt, y0, dy0, t0, tf, h0);
  double residual = 0.0;
  for (std::size_t k = 0; k < a.dy.size(); ++k) {
    const double ds_gap = a.ds[k] - b.ds[k];
    residual = std::max(residual, std::sqrt((a.dy[k] - b.dy[k]).squaredNorm() + ds_gap * ds_gap));
  }
  return residual;
}

// ---------------------------------------------------------------------------
// Exact discrete adjoint of the adaptive recurrence
// ---------------------------------------------------------------------------

/// Adjoint trajectory of the full augmented map (y, s, h) -> (y', s', h'),
/// including the controller partials. p[n] is the exact gradient of
/// ⟨p_terminal, y_N⟩ with respect to y_n; p[0] is the exact discrete gradient.
struct AdaptiveAdjointTrajectory {
  std::vector<Vec> p;      // a_y, aligned with the forward times
  std::vector<double> p_s; // a_s
  std::vector<double> p_h; // a_h
};

inline AdaptiveAdjointTrajectory adaptive_backpropagate(const AdaptiveController& controller,
                                                        const RhsFn& rhs, const JacFn& jac,
                                                        const TimePartialFn& gt,
                                                        const TrajectoryBundle& forward,
                                                        const Vec& p_terminal) {
  forward.validate();
  const std::size_t n_total = forward.n_steps();
  if (forward.controller_steps.size() != n_total) {
    throw std::invalid_argument(
        "adaptive_backpropagate: forward bundle lacks controller steps");
  }
  AdaptiveAdjointTrajectory out;
  out.p.assign(n_total + 1, Vec());
  out.p_s.assign(n_total + 1, 0.0);
  out.p_h.assign(n_total + 1, 0.0);
  out.p[n_total] = p_terminal;

  for (std::size_t n = n_total; n-- > 0;) {
    const double s = forward.times[n];
    const Vec& y = forward.states[n];
    const double h_ctrl = forward.controller_steps[n];
    const double h_use = forward.times[n + 1] - forward.times[n];
    const bool truncated = n + 1 == n_total && h_ctrl > h_use;

    const Vec g = rhs(s, y);
    const Mat jt = jac(s, y).transpose();
    const Vec g_s = detail::time_partial_or_zero(gt, s, y);
    const Vec& ay_next = out.p[n + 1];
    const double as_next = out.p_s[n + 1];
    const double ah_next = out.p_h[n + 1];

    if (truncated) {
      // y' = y + (tf - s) g(s, y); s' = tf; h' unused.
      out.p[n] = ay_next + h_use * (jt * ay_next);
      out.p_s[n] = (-g + h_use * g_s).dot(ay_next);
      out.p_h[n] = 0.0;
    } else {
      out.p[n] = ay_next + h_ctrl * (jt * ay_next) +
                 controller.d_state(y, h_ctrl, s) * ah_next;
      out.p_s[n] = h_ctrl * g_s.dot(ay_next) + as_next +
                   controller.d_time(y, h_ctrl, s) * ah_next;
      out.p_h[n] = g.dot(ay_next) + as_next + controller.d_step(y, h_ctrl, s) * ah_next;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Continuous-level reference (optimize-then-discretize route)
// ---------------------------------------------------------------------------

/// Reference trajectories for the continuous conservation law: RK4 on the
/// state/variational pair forward and on the adjoint ODE backward from tf,
/// all on the same fine grid (state stored at half-steps so the backward RK4
/// stages reuse exact nodes).
struct ContinuousReference {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> variations;
  std::vector<Vec> adjoints;
};

inline ContinuousReference continuous_adjoint_reference(const AdjointSystem& system,
                                                        const Vec& q0, const Vec& dq0,
                                                        const Vec& p_tf, double t0, double tf,
                                                        int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("continuous_adjoint_reference: n_steps >= 1");
  const SemiDiscreteODE& ode = system.ode();
  VariationalSystem variational(ode);
  const double h = (tf - t0) / n_steps;

  // Forward pass on the half grid (2 n_steps RK4 steps).
  auto rk4 = make_method(MethodKind::RK4);
  RhsFn aug = [&](double t, const Vec& u) {
    const Index n = ode.dim();
    Vec q = u.head(n);
    Vec out(2 * n);
    out.head(n) = ode.rhs(t, q);
    out.tail(n) = variational.variational_rhs(t, q, u.tail(n));
    return out;
  };
  Vec u0(2 * ode.dim());
  u0 << q0, dq0;
  TrajectoryBundle fine = integrate_forward(*rk4, aug, u0, t0, tf, 2 * n_steps);

  ContinuousReference ref;
  ref.times.resize(n_steps + 1);
  ref.states.resize(n_steps + 1);
  ref.variations.resize(n_steps + 1);
  ref.adjoints.resize(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) {
    ref.times[k] = fine.times[2 * k];
    ref.states[k] = fine.states[2 * k].head(ode.dim());
    ref.variations[k] = fine.states[2 * k].tail(ode.dim());
  }

  // Backward pass: classical RK4 on ṗ = adjoint_rhs(t, q(t), p) with step -h;
  // stage states come from the stored half grid.
  ref.adjoints[n_steps] = p_tf;
  for (int k = n_steps; k-- > 0;) {
    const double t1 = ref.times[k + 1];
    const Vec& q1 = fine.states[2 * k + 2];
    const Vec& qm = fine.states[2 * k + 1];
    const Vec& q0k = fine.states[2 * k];
    const Index n = ode.dim();
    auto f = [&](double t, const Vec& qfull, const Vec& p) {
      return system.adjoint_rhs(t, Vec(qfull.head(n)), p);
    };
    const Vec& p1 = ref.adjoints[k + 1];
    Vec k1 = f(t1, q1, p1);
    Vec k2 = f(t1 - h / 2.0, qm, Vec(p1 - (h / 2.0) * k1));
    Vec k3 = f(t1 - h / 2.0, qm, Vec(p1 - (h / 2.0) * k2));
    Vec k4 = f(t1 - h, q0k, Vec(p1 - h * k3));
    ref.adjoints[k] = p1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return ref;
}

}  // namespace adjlab
