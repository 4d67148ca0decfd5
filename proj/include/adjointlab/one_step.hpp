#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adjointlab/dense.hpp"

// One-step time integration with exact tangent (variational) and cotangent
// (adjoint) lifts. The cotangent step is the transpose of the tangent step
// with respect to the standard pairing and is exposed, as in backpropagation,
// as the map p_{n+1} -> p_n. For explicit Runge-Kutta methods it is computed
// by stage-wise reverse-mode transposition of the step map; for the implicit
// midpoint rule by one transposed linear solve with the converged stage
// Jacobian.

namespace adjlab {

using RhsFn = std::function<Vec(double, const Vec&)>;
using JacFn = std::function<Mat(double, const Vec&)>;

enum class MethodKind { ExplicitEuler, Heun, RK4, ImplicitMidpoint, AdaptiveEuler };

inline std::string to_string(MethodKind m) {
  switch (m) {
    case MethodKind::ExplicitEuler: return "explicit-euler";
    case MethodKind::Heun: return "heun";
    case MethodKind::RK4: return "rk4";
    case MethodKind::ImplicitMidpoint: return "implicit-midpoint";
    case MethodKind::AdaptiveEuler: return "adaptive-euler";
  }
  return "?";
}

class OneStepMethod {
 public:
  virtual ~OneStepMethod() = default;

  virtual std::string_view name() const = 0;
  virtual int order() const = 0;

  /// y_{n+1} = Φ_h(t_n, y_n).
  virtual Vec step(const RhsFn& rhs, double t, const Vec& y, double h) const = 0;

  /// Same map; implicit methods use the analytic Jacobian inside Newton.
  /// The converged step does not depend on the Newton Jacobian.
  virtual Vec step(const RhsFn& rhs, const JacFn& /*jac*/, double t, const Vec& y,
                   double h) const {
    return step(rhs, t, y, h);
  }

  /// δy_{n+1} = DΦ_h(t_n, y_n) δy_n — the exact Fréchet derivative of step().
  virtual Vec tangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y,
                           const Vec& dy, double h) const = 0;

  /// p_n = [DΦ_h(t_n, y_n)]ᵀ p_{n+1} — the exact adjoint of tangent_step().
  virtual Vec cotangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y,
                             const Vec& p_next, double h) const = 0;
};

namespace detail {

struct ButcherTableau {
  std::string name;
  int order;
  std::vector<std::vector<double>> a;  // strictly lower triangular
  std::vector<double> b;
  std::vector<double> c;
};

inline ButcherTableau explicit_euler_tableau() {
  return {"explicit-euler", 1, {{}}, {1.0}, {0.0}};
}

inline ButcherTableau heun_tableau() {
  return {"heun", 2, {{}, {1.0}}, {0.5, 0.5}, {0.0, 1.0}};
}

inline ButcherTableau rk4_tableau() {
  return {"rk4",
          4,
          {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
          {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
          {0.0, 0.5, 0.5, 1.0}};
}

}  // namespace detail

class ExplicitRungeKutta final : public OneStepMethod {
 public:
  explicit ExplicitRungeKutta(detail::ButcherTableau tableau) : t_(std::move(tableau)) {}

  std::string_view name() const override { return t_.name; }
  int order() const override { return t_.order; }

  using OneStepMethod::step;

  Vec step(const RhsFn& rhs, double t, const Vec& y, double h) const override {
    const int s = static_cast<int>(t_.b.size());
    std::vector<Vec> k(s);
    Vec y_next = y;
    for (int i = 0; i < s; ++i) {
      Vec stage = y;
      for (int j = 0; j < i; ++j) {
        if (t_.a[i][j] != 0.0) stage += (h * t_.a[i][j]) * k[j];
      }
      k[i] = rhs(t + t_.c[i] * h, stage);
      y_next += (h * t_.b[i]) * k[i];
    }
    return y_next;
  }

  Vec tangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y, const Vec& dy,
                   double h) const override {
    const int s = static_cast<int>(t_.b.size());
    std::vector<Vec> k(s), dk(s);
    Vec dy_next = dy;
    for (int i = 0; i < s; ++i) {
      Vec stage = y;
      Vec dstage = dy;
      for (int j = 0; j < i; ++j) {
        if (t_.a[i][j] != 0.0) {
          stage += (h * t_.a[i][j]) * k[j];
          dstage += (h * t_.a[i][j]) * dk[j];
        }
      }
      k[i] = rhs(t + t_.c[i] * h, stage);
      dk[i] = jac(t + t_.c[i] * h, stage) * dstage;
      dy_next += (h * t_.b[i]) * dk[i];
    }
    return dy_next;
  }

  Vec cotangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y,
                     const Vec& p_next, double h) const override {
    const int s = static_cast<int>(t_.b.size());
    // Recompute the forward stages, then transpose stage by stage in reverse:
    //   w_i = h b_i p + h Σ_{m>i} a_{mi} J_mᵀ w_m,   p_n = p + Σ_i J_iᵀ w_i.
    std::vector<Vec> k(s);
    std::vector<Mat> jt(s);
    for (int i = 0; i < s; ++i) {
      Vec stage = y;
      for (int j = 0; j < i; ++j) {
        if (t_.a[i][j] != 0.0) stage += (h * t_.a[i][j]) * k[j];
      }
      k[i] = rhs(t + t_.c[i] * h, stage);
      jt[i] = jac(t + t_.c[i] * h, stage).transpose();
    }
    std::vector<Vec> jtw(s);  // J_iᵀ w_i
    for (int i = s - 1; i >= 0; --i) {
      Vec w = (h * t_.b[i]) * p_next;
      for (int m = i + 1; m < s; ++m) {
        if (t_.a[m][i] != 0.0) w += (h * t_.a[m][i]) * jtw[m];
      }
      jtw[i] = jt[i] * w;
    }
    Vec p = p_next;
    for (int i = 0; i < s; ++i) p += jtw[i];
    return p;
  }

 private:
  detail::ButcherTableau t_;
};

struct NewtonOptions {
  double tolerance = 1e-12;  // stage residual, infinity norm
  int max_iterations = 50;
};

/// Implicit midpoint rule y' = y + h g(t + h/2, (y + y')/2), solved by Newton.
class ImplicitMidpoint final : public OneStepMethod {
 public:
  explicit ImplicitMidpoint(NewtonOptions options = {}) : opts_(options) {}

  std::string_view name() const override { return "implicit-midpoint"; }
  int order() const override { return 2; }

  using OneStepMethod::step;

  Vec step(const RhsFn& rhs, double t, const Vec& y, double h) const override {
    return solve_step(rhs, nullptr, t, y, h);
  }

  Vec step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y, double h) const override {
    return solve_step(rhs, &jac, t, y, h);
  }

  Vec tangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y, const Vec& dy,
                   double h) const override {
    Mat j = midpoint_jacobian(rhs, jac, t, y, h);
    const Index n = y.size();
    Mat lhs = Mat::Identity(n, n) - (h / 2.0) * j;
    Vec rhs_vec = dy + (h / 2.0) * (j * dy);
    return FactoredMatrix(std::move(lhs), "implicit midpoint tangent system").solve(rhs_vec);
  }

  Vec cotangent_step(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y,
                     const Vec& p_next, double h) const override {
    Mat j = midpoint_jacobian(rhs, jac, t, y, h);
    const Index n = y.size();
    Mat lhs = Mat::Identity(n, n) - (h / 2.0) * j;
    Vec w = FactoredMatrix(std::move(lhs), "implicit midpoint adjoint system")
                .solve_transpose(p_next);
    return w + (h / 2.0) * (j.transpose() * w);
  }

  const NewtonOptions& options() const { return opts_; }

 private:
  // Newton on F(y') = y' - y - h g(t + h/2, (y + y')/2). The Jacobian is
  // rebuilt each iteration; a finite-difference fallback keeps the solve
  // usable when no analytic Jacobian is supplied (the converged root does not
  // depend on the Newton Jacobian).
  Vec solve_step(const RhsFn& rhs, const JacFn* jac, double t, const Vec& y, double h) const {
    const Index n = y.size();
    const double t_mid = t + h / 2.0;
    Vec y_next = y + h * rhs(t, y);  // Euler predictor
    for (int it = 0; it < opts_.max_iterations; ++it) {
      Vec mid = 0.5 * (y + y_next);
      Vec residual = y_next - y - h * rhs(t_mid, mid);
      if (residual.lpNorm<Eigen::Infinity>() <= opts_.tolerance) return y_next;
      Mat j = jac ? (*jac)(t_mid, mid) : fd_jacobian(rhs, t_mid, mid);
      Mat newton = Mat::Identity(n, n) - (h / 2.0) * j;
      y_next -= FactoredMatrix(std::move(newton), "implicit midpoint Newton system")
                    .solve(residual);
    }
    Vec mid = 0.5 * (y + y_next);
    Vec residual = y_next - y - h * rhs(t_mid, mid);
    if (residual.lpNorm<Eigen::Infinity>() <= opts_.tolerance) return y_next;
    throw NumericalError("implicit midpoint: Newton failed to reach tolerance " +
                         std::to_string(opts_.tolerance) + " within " +
                         std::to_string(opts_.max_iterations) + " iterations");
  }

  Mat midpoint_jacobian(const RhsFn& rhs, const JacFn& jac, double t, const Vec& y,
                        double h) const {
    Vec y_next = solve_step(rhs, &jac, t, y, h);
    return jac(t + h / 2.0, 0.5 * (y + y_next));
  }

  static Mat fd_jacobian(const RhsFn& rhs, double t, const Vec& y) {
    const Index n = y.size();
    Mat j(n, n);
    Vec f0 = rhs(t, y);
    for (Index i = 0; i < n; ++i) {
      const double eps = 1e-7 * std::max(1.0, std::abs(y[i]));
      Vec yp = y;
      yp[i] += eps;
      j.col(i) = (rhs(t, yp) - f0) / eps;
    }
    return j;
  }

  NewtonOptions opts_;
};

inline std::shared_ptr<const OneStepMethod> make_method(MethodKind kind,
                                                        NewtonOptions newton = {}) {
  switch (kind) {
    case MethodKind::ExplicitEuler:
      return std::make_shared<ExplicitRungeKutta>(detail::explicit_euler_tableau());
    case MethodKind::Heun:
      return std::make_shared<ExplicitRungeKutta>(detail::heun_tableau());
    case MethodKind::RK4:
      return std::make_shared<ExplicitRungeKutta>(detail::rk4_tableau());
    case MethodKind::ImplicitMidpoint:
      return std::make_shared<ImplicitMidpoint>(newton);
    case MethodKind::AdaptiveEuler:
      throw std::invalid_argument(
          "adaptive-euler is driven by integrate_adaptive_euler, not a fixed-step method");
  }
  throw std::logic_error("make_method: unreachable");
}

/// Differentiable step-size controller h_{n+1} = S(y_n, h_n, s_n) with
/// analytic partials, clamped to [h_min, h_max].
struct AdaptiveController {
  std::function<double(const Vec&, double, double)> value;
  std::function<Vec(const Vec&, double, double)> d_state;   // D₁S, gradient in y
  std::function<double(const Vec&, double, double)> d_step;  // D₂S
  std::function<double(const Vec&, double, double)> d_time;  // D₃S
  double h_min = 1e-8;
  double h_max = 1.0;

  double next_step(const Vec& y, double h, double s) const {
    const double raw = value(y, h, s);
    return std::min(std::max(raw, h_min), h_max);
  }
};

/// Degenerate controller S ≡ h0 (all partials zero): reduces the adaptive
/// method to fixed-step Euler.
inline AdaptiveController constant_controller(double h0) {
  AdaptiveController c;
  c.value = [h0](const Vec&, double, double) { return h0; };
  c.d_state = [](const Vec& y, double, double) { return Vec(Vec::Zero(y.size())); };
  c.d_step = [](const Vec&, double, double) { return 0.0; };
  c.d_time = [](const Vec&, double, double) { return 0.0; };
  return c;
}

/// State-dependent controller S(y,h,s) = h (1 + γ r0²) / (1 + γ ‖y‖²), with
/// r0 = ‖y_ref‖ so the first step keeps h0 when y_ref = y0. D₁S ≠ 0, which is
/// exactly what breaks variational equivariance.
inline AdaptiveController state_norm_controller(double gamma, const Vec& y_ref,
                                                double h_min = 1e-8, double h_max = 1.0) {
  const double num = 1.0 + gamma * y_ref.squaredNorm();
  AdaptiveController c;
  c.h_min = h_min;
  c.h_max = h_max;
  c.value = [=](const Vec& y, double h, double) { return h * num / (1.0 + gamma * y.squaredNorm()); };
  c.d_state = [=](const Vec& y, double h, double) {
    const double denom = 1.0 + gamma * y.squaredNorm();
    return Vec((-2.0 * gamma * h * num / (denom * denom)) * y);
  };
  c.d_step = [=](const Vec& y, double, double) { return num / (1.0 + gamma * y.squaredNorm()); };
  c.d_time = [](const Vec&, double, double) { return 0.0; };
  return c;
}

}  // namespace adjlab
