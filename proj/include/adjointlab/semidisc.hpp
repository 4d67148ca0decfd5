#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "adjointlab/dense.hpp"
#include "adjointlab/problem.hpp"

// Method-of-lines semi-discretization: assembles the built-in problems into
// M q̇ = K q + f(t, q) on the degrees of freedom. Two assemblers are provided,
// P1 Galerkin finite elements and classical finite differences (M = I).
// Convention: K already carries the sign from integration by parts, so the
// ODE reads M q̇ = K q + f with no per-problem sign flips.

namespace adjlab {

/// The semi-discrete system M q̇ = K q + f(t,q) with Jacobian access.
/// Immutable after construction; rhs/jacobian evaluation is pure.
class SemiDiscreteODE {
 public:
  using NonlinearFn = std::function<Vec(double, const Vec&)>;
  using NonlinearJacFn = std::function<Mat(double, const Vec&)>;

  SemiDiscreteODE(Mat mass, Mat linear, NonlinearFn f, NonlinearJacFn df)
      : mass_(std::make_shared<FactoredMatrix>(std::move(mass), "mass matrix")),
        linear_(std::move(linear)),
        nonlinear_(std::move(f)),
        nonlinear_jacobian_(std::move(df)) {
    require_square(linear_, "stiffness matrix");
    require_same_dim(linear_.rows(), mass_->dim(), "mass/stiffness");
    require_finite(linear_, "stiffness matrix");
    if (!nonlinear_ || !nonlinear_jacobian_) {
      throw std::invalid_argument("SemiDiscreteODE: nonlinear term and Jacobian required");
    }
  }

  /// Linear system (f ≡ 0).
  SemiDiscreteODE(Mat mass, Mat linear)
      : SemiDiscreteODE(std::move(mass), std::move(linear),
                        [](double, const Vec& q) { return Vec(Vec::Zero(q.size())); },
                        [](double, const Vec& q) {
                          return Mat(Mat::Zero(q.size(), q.size()));
                        }) {}

  Index dim() const { return linear_.rows(); }
  const Mat& mass() const { return mass_->matrix(); }
  const Mat& linear() const { return linear_; }
  const FactoredMatrix& mass_factored() const { return *mass_; }

  Vec nonlinear(double t, const Vec& q) const { return nonlinear_(t, q); }
  Mat nonlinear_jacobian(double t, const Vec& q) const { return nonlinear_jacobian_(t, q); }

  /// q̇ = M⁻¹ (K q + f(t,q)).
  Vec rhs(double t, const Vec& q) const {
    require_dim(q.size(), dim(), "rhs state");
    return mass_->solve(linear_ * q + nonlinear_(t, q));
  }

  /// D_q rhs = M⁻¹ (K + D_q f(t,q)).
  Mat rhs_jacobian(double t, const Vec& q) const {
    require_dim(q.size(), dim(), "rhs_jacobian state");
    return mass_->solve(Mat(linear_ + nonlinear_jacobian_(t, q)));
  }

  std::function<Vec(double, const Vec&)> rhs_fn() const {
    return [ode = *this](double t, const Vec& q) { return ode.rhs(t, q); };
  }

  std::function<Mat(double, const Vec&)> jac_fn() const {
    return [ode = *this](double t, const Vec& q) { return ode.rhs_jacobian(t, q); };
  }

 private:
  std::shared_ptr<const FactoredMatrix> mass_;
  Mat linear_;
  NonlinearFn nonlinear_;
  NonlinearJacFn nonlinear_jacobian_;
};

/// P1 mesh/dof bookkeeping for the Galerkin assembly. Nodes are the
/// degree-of-freedom locations (interior nodes for DirichletZero, all nodes
/// but the duplicate endpoint for Periodic).
struct GalerkinDiscretization {
  BoundaryCondition bc = BoundaryCondition::DirichletZero;
  int n_elements = 0;
  double h = 0.0;
  Vec nodes;      // dof coordinates
  Mat mass;       // Mᵢⱼ = ∫ φᵢ φⱼ
  Mat stiffness;  // K with the ODE-side sign convention
};

namespace detail {

inline void check_supported(const EvolutionProblem& p) {
  p.validate();
  const bool ok = (p.kind == ProblemKind::Heat && p.bc == BoundaryCondition::DirichletZero) ||
                  (p.kind == ProblemKind::Advection && p.bc == BoundaryCondition::Periodic) ||
                  (p.kind == ProblemKind::Burgers && p.bc == BoundaryCondition::DirichletZero);
  if (!ok) {
    throw std::invalid_argument(
        to_string(p.kind) + " with " + to_string(p.bc) +
        " boundary conditions is not supported; supported combinations: "
        "heat+dirichlet0, advection+periodic, burgers+dirichlet0");
  }
}

// P1 mass matrix on a uniform mesh. Interior rows are (h/6)(1, 4, 1).
inline Mat p1_mass(Index dim, double h, BoundaryCondition bc) {
  Mat m = Mat::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    m(i, i) = 4.0 * h / 6.0;
    if (i + 1 < dim) {
      m(i, i + 1) = h / 6.0;
      m(i + 1, i) = h / 6.0;
    }
  }
  if (bc == BoundaryCondition::Periodic) {
    m(0, dim - 1) += h / 6.0;
    m(dim - 1, 0) += h / 6.0;
  }
  return m;
}

// -ν ∫ φᵢ' φⱼ' : interior rows (ν/h)(1, -2, 1).
inline Mat p1_diffusion(Index dim, double h, double nu, BoundaryCondition bc) {
  Mat k = Mat::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    k(i, i) = -2.0 * nu / h;
    if (i + 1 < dim) {
      k(i, i + 1) = nu / h;
      k(i + 1, i) = nu / h;
    }
  }
  if (bc == BoundaryCondition::Periodic) {
    k(0, dim - 1) += nu / h;
    k(dim - 1, 0) += nu / h;
  }
  return k;
}

// -a ∫ φⱼ' φᵢ (weak first derivative): rows a(1/2, 0, -1/2), zero row sums.
inline Mat p1_advection(Index dim, double a, BoundaryCondition bc) {
  Mat k = Mat::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    if (i + 1 < dim) {
      k(i, i + 1) = -a / 2.0;
      k(i + 1, i) = a / 2.0;
    }
  }
  if (bc == BoundaryCondition::Periodic) {
    k(0, dim - 1) += a / 2.0;
    k(dim - 1, 0) += -a / 2.0;
  }
  return k;
}

// P1 projection of the Burgers term -q q_x with exact element quadrature,
// boundary dofs eliminated (DirichletZero). Element [x_e, x_{e+1}] with end
// coefficients (ql, qr) contributes
//   f_left  -= (qr-ql) (ql/3 + qr/6)
//   f_right -= (qr-ql) (ql/6 + qr/3),
// which is the exact integral of u u_x against each hat function.
struct BurgersGalerkinTerm {
  int n_elements;

  Vec operator()(double, const Vec& q) const {
    const Index dim = q.size();
    Vec f = Vec::Zero(dim);
    for (int e = 0; e < n_elements; ++e) {
      const double ql = (e == 0) ? 0.0 : q[e - 1];
      const double qr = (e == n_elements - 1) ? 0.0 : q[e];
      const double slope = qr - ql;
      if (e > 0) f[e - 1] -= slope * (ql / 3.0 + qr / 6.0);
      if (e < n_elements - 1) f[e] -= slope * (ql / 6.0 + qr / 3.0);
    }
    return f;
  }

  Mat jacobian(double, const Vec& q) const {
    const Index dim = q.size();
    Mat df = Mat::Zero(dim, dim);
    for (int e = 0; e < n_elements; ++e) {
      const double ql = (e == 0) ? 0.0 : q[e - 1];
      const double qr = (e == n_elements - 1) ? 0.0 : q[e];
      const double slope = qr - ql;
      const int il = e - 1;  // dof index of the left node, -1 if boundary
      const int ir = (e == n_elements - 1) ? -1 : e;
      if (il >= 0) {
        df(il, il) += (ql / 3.0 + qr / 6.0) - slope / 3.0;
        if (ir >= 0) df(il, ir) += -(ql / 3.0 + qr / 6.0) - slope / 6.0;
      }
      if (ir >= 0) {
        if (il >= 0) df(ir, il) += (ql / 6.0 + qr / 3.0) - slope / 6.0;
        df(ir, ir) += -(ql / 6.0 + qr / 3.0) - slope / 3.0;
      }
    }
    return df;
  }
};

// Pointwise Burgers term -q q_x with a centered difference, interior dofs.
struct BurgersPointwiseTerm {
  double h;

  Vec operator()(double, const Vec& q) const {
    const Index dim = q.size();
    Vec f(dim);
    for (Index i = 0; i < dim; ++i) {
      const double qm = (i == 0) ? 0.0 : q[i - 1];
      const double qp = (i == dim - 1) ? 0.0 : q[i + 1];
      f[i] = -q[i] * (qp - qm) / (2.0 * h);
    }
    return f;
  }

  Mat jacobian(double, const Vec& q) const {
    const Index dim = q.size();
    Mat df = Mat::Zero(dim, dim);
    for (Index i = 0; i < dim; ++i) {
      const double qm = (i == 0) ? 0.0 : q[i - 1];
      const double qp = (i == dim - 1) ? 0.0 : q[i + 1];
      df(i, i) = -(qp - qm) / (2.0 * h);
      if (i > 0) df(i, i - 1) = q[i] / (2.0 * h);
      if (i + 1 < dim) df(i, i + 1) = -q[i] / (2.0 * h);
    }
    return df;
  }
};

}  // namespace detail

/// Assembles the P1 Galerkin semi-discretization of a built-in problem.
/// DirichletZero eliminates boundary dofs (interior system, dim = n-1);
/// Periodic keeps one dof per mesh node (dim = n).
inline std::pair<GalerkinDiscretization, SemiDiscreteODE> assemble_galerkin(
    const EvolutionProblem& problem, int n_elements) {
  detail::check_supported(problem);
  if (n_elements < 2) {
    throw std::invalid_argument("assemble_galerkin: n_elements must be >= 2");
  }
  const double h = 1.0 / n_elements;
  const bool periodic = problem.bc == BoundaryCondition::Periodic;
  const Index dim = periodic ? n_elements : n_elements - 1;

  GalerkinDiscretization g;
  g.bc = problem.bc;
  g.n_elements = n_elements;
  g.h = h;
  g.nodes = Vec(dim);
  for (Index i = 0; i < dim; ++i) g.nodes[i] = periodic ? i * h : (i + 1) * h;
  g.mass = detail::p1_mass(dim, h, problem.bc);

  switch (problem.kind) {
    case ProblemKind::Heat:
      g.stiffness = detail::p1_diffusion(dim, h, problem.diffusion, problem.bc);
      return {g, SemiDiscreteODE(g.mass, g.stiffness)};
    case ProblemKind::Advection:
      g.stiffness = detail::p1_advection(dim, problem.advection_speed, problem.bc);
      return {g, SemiDiscreteODE(g.mass, g.stiffness)};
    case ProblemKind::Burgers: {
      g.stiffness = detail::p1_diffusion(dim, h, problem.diffusion, problem.bc);
      detail::BurgersGalerkinTerm term{n_elements};
      SemiDiscreteODE ode(
          g.mass, g.stiffness,
          [term](double t, const Vec& q) { return term(t, q); },
          [term](double t, const Vec& q) { return term.jacobian(t, q); });
      return {g, std::move(ode)};
    }
  }
  throw std::logic_error("assemble_galerkin: unreachable");
}

/// Assembles the finite-difference semi-discretization (M = I): centered
/// second-order Laplacian for Heat, first-order upwind for Advection,
/// pointwise nonlinearity for Burgers.
inline SemiDiscreteODE assemble_finite_difference(const EvolutionProblem& problem, int n_points) {
  detail::check_supported(problem);
  if (n_points < 3) {
    throw std::invalid_argument("assemble_finite_difference: n_points must be >= 3");
  }
  const bool periodic = problem.bc == BoundaryCondition::Periodic;
  const double h = periodic ? 1.0 / n_points : 1.0 / (n_points - 1);
  const Index dim = periodic ? n_points : n_points - 2;
  Mat eye = Mat::Identity(dim, dim);

  switch (problem.kind) {
    case ProblemKind::Heat: {
      Mat k = Mat::Zero(dim, dim);
      const double c = problem.diffusion / (h * h);
      for (Index i = 0; i < dim; ++i) {
        k(i, i) = -2.0 * c;
        if (i + 1 < dim) {
          k(i, i + 1) = c;
          k(i + 1, i) = c;
        }
      }
      if (periodic) {
        k(0, dim - 1) += c;
        k(dim - 1, 0) += c;
      }
      return SemiDiscreteODE(eye, k);
    }
    case ProblemKind::Advection: {
      // Upwind in the flow direction; rows sum to zero exactly.
      Mat k = Mat::Zero(dim, dim);
      const double a = problem.advection_speed;
      const double c = std::abs(a) / h;
      for (Index i = 0; i < dim; ++i) {
        k(i, i) = -c;
        if (a >= 0.0) {
          k(i, (i + dim - 1) % dim) += c;
        } else {
          k(i, (i + 1) % dim) += c;
        }
      }
      return SemiDiscreteODE(eye, k);
    }
    case ProblemKind::Burgers: {
      Mat k = Mat::Zero(dim, dim);
      const double c = problem.diffusion / (h * h);
      for (Index i = 0; i < dim; ++i) {
        k(i, i) = -2.0 * c;
        if (i + 1 < dim) {
          k(i, i + 1) = c;
          k(i + 1, i) = c;
        }
      }
      detail::BurgersPointwiseTerm term{h};
      return SemiDiscreteODE(
          eye, k, [term](double t, const Vec& q) { return term(t, q); },
          [term](double t, const Vec& q) { return term.jacobian(t, q); });
    }
  }
  throw std::logic_error("assemble_finite_difference: unreachable");
}

/// Nodal interpolation of the problem's initial condition onto the dofs.
inline Vec initial_coefficients(const EvolutionProblem& problem, const Vec& nodes) {
  Vec q0(nodes.size());
  for (Index i = 0; i < nodes.size(); ++i) q0[i] = problem.initial_condition(nodes[i]);
  require_finite(q0, "initial coefficients");
  return q0;
}

/// Dof coordinates for the finite-difference assembly, mirroring the layout
/// chosen by assemble_finite_difference.
inline Vec finite_difference_nodes(const EvolutionProblem& problem, int n_points) {
  const bool periodic = problem.bc == BoundaryCondition::Periodic;
  const double h = periodic ? 1.0 / n_points : 1.0 / (n_points - 1);
  const Index dim = periodic ? n_points : n_points - 2;
  Vec nodes(dim);
  for (Index i = 0; i < dim; ++i) nodes[i] = periodic ? i * h : (i + 1) * h;
  return nodes;
}

}  // namespace adjlab
