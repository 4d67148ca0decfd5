#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adjointlab/dense.hpp"
#include "adjointlab/integrate.hpp"
#include "adjointlab/one_step.hpp"
#include "adjointlab/semidisc.hpp"

// Adjoint-based discrete gradients of terminal costs C(q_N), their
// finite-difference oracle, and the adjoint-consistency order study.

namespace adjlab {

struct CostFunction {
  std::string name;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;  // covector DC in the standard pairing

  static CostFunction half_squared_norm() {
    return {"half-squared-norm", [](const Vec& q) { return 0.5 * q.squaredNorm(); },
            [](const Vec& q) { return q; }};
  }

  static CostFunction weighted_terminal(Vec w) {
    return {"weighted-terminal", [w](const Vec& q) {
              require_same_dim(q.size(), w.size(), "weighted terminal cost");
              return w.dot(q);
            },
            [w](const Vec& q) {
              require_same_dim(q.size(), w.size(), "weighted terminal cost gradient");
              return w;
            }};
  }
};

struct SensitivityResult {
  Vec gradient;  // ∂C(q_N)/∂q_0, reported in the requested pairing's coordinates
  double invariant_drift = 0.0;
  std::optional<double> method_order_estimate;
};

/// Runs forward, seeds p_N = DC(q_N), backpropagates through the cotangent
/// lift: p_0 is the exact gradient of the fully discrete objective. The
/// invariant drift is measured on the same run against a seeded variational
/// trajectory.
inline SensitivityResult discrete_gradient(const OneStepMethod& method,
                                           const SemiDiscreteODE& ode, const CostFunction& cost,
                                           const Vec& q0, double t0, double tf, int n_steps,
                                           std::optional<DualityPairing> report_pairing = {},
                                           std::uint64_t seed = kDefaultSeed) {
  RandomVectors rng(seed);
  Vec dq0 = rng.unit(q0.size());
  TrajectoryBundle bundle =
      integrate_variational(method, ode.rhs_fn(), ode.jac_fn(), q0, dq0, t0, tf, n_steps);
  Vec p_terminal = cost.gradient(bundle.states.back());
  bundle = backpropagate(method, ode.rhs_fn(), ode.jac_fn(), std::move(bundle), p_terminal);

  SensitivityResult result;
  result.invariant_drift = relative_drift(bundle.invariant_series);
  if (report_pairing && !report_pairing->is_standard()) {
    result.gradient = report_pairing->solve_transpose(bundle.adjoints.front());
  } else {
    result.gradient = bundle.adjoints.front();
  }
  return result;
}

/// Central differences of the fully discrete objective, one forward solve
/// pair per component. Exact (up to roundoff) on objectives quadratic in q0.
inline Vec fd_gradient_oracle(const OneStepMethod& method, const SemiDiscreteODE& ode,
                              const CostFunction& cost, const Vec& q0, double t0, double tf,
                              int n_steps, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient_oracle: eps must be > 0");
  auto objective = [&](const Vec& start) {
    return cost.value(
        integrate_forward(method, ode.rhs_fn(), start, t0, tf, n_steps, ode.jac_fn())
            .states.back());
  };
  Vec grad(q0.size());
  for (Index i = 0; i < q0.size(); ++i) {
    Vec plus = q0;
    Vec minus = q0;
    plus[i] += eps;
    minus[i] -= eps;
    grad[i] = (objective(plus) - objective(minus)) / (2.0 * eps);
  }
  return grad;
}

struct OrderStudyPoint {
  double h;
  double adjoint_error;  // max_n ‖p_n - p_ref(t_n)‖
};

struct OrderStudyResult {
  std::vector<OrderStudyPoint> points;
  double slope = 0.0;  // least-squares log-log slope
};

/// Adjoint-consistency study: backpropagates at each step count and measures
/// the distance to a cotangent-lifted RK4 reference on a 16x finer grid than
/// the finest study grid.
inline OrderStudyResult adjoint_order_study(const OneStepMethod& method,
                                            const SemiDiscreteODE& ode, const CostFunction& cost,
                                            const Vec& q0, double t0, double tf,
                                            std::vector<int> step_counts) {
  if (step_counts.size() < 3) {
    throw std::invalid_argument("adjoint_order_study: need at least 3 step counts");
  }
  int max_count = 0;
  for (int c : step_counts) {
    if (c < 1) throw std::invalid_argument("adjoint_order_study: step counts must be >= 1");
    max_count = std::max(max_count, c);
  }
  const int n_ref = 16 * max_count;
  for (int c : step_counts) {
    if (n_ref % c != 0) {
      throw std::invalid_argument(
          "adjoint_order_study: each step count must divide 16x the largest one (got " +
          std::to_string(c) + " vs reference " + std::to_string(n_ref) + ")");
    }
  }

  auto rk4 = make_method(MethodKind::RK4);
  TrajectoryBundle ref_forward =
      integrate_forward(*rk4, ode.rhs_fn(), q0, t0, tf, n_ref, ode.jac_fn());
  Vec p_ref_terminal = cost.gradient(ref_forward.states.back());
  TrajectoryBundle ref = backpropagate(*rk4, ode.rhs_fn(), ode.jac_fn(),
                                       std::move(ref_forward), p_ref_terminal);

  OrderStudyResult out;
  std::vector<double> hs, errs;
  for (int count : step_counts) {
    TrajectoryBundle forward =
        integrate_forward(method, ode.rhs_fn(), q0, t0, tf, count, ode.jac_fn());
    Vec p_terminal = cost.gradient(forward.states.back());
    TrajectoryBundle run =
        backpropagate(method, ode.rhs_fn(), ode.jac_fn(), std::move(forward), p_terminal);
    const int stride = n_ref / count;
    double err = 0.0;
    for (int n = 0; n <= count; ++n) {
      err = std::max(err, (run.adjoints[n] - ref.adjoints[n * stride]).norm());
    }
    const double h = (tf - t0) / count;
    out.points.push_back({h, err});
    hs.push_back(h);
    errs.push_back(err);
  }
  out.slope = loglog_slope(hs, errs);
  return out;
}

}  // namespace adjlab
