#pragma once

#include <utility>

#include "adjointlab/dense.hpp"
#include "adjointlab/pairing.hpp"
#include "adjointlab/semidisc.hpp"

// Pairing-induced adjoint systems at the semi-discrete level. For the system
// q̇ = M⁻¹(Kq + f) and a pairing with matrix P, the adjoint Hamiltonian is
// H(t,q,p) = pair(p, M⁻¹(Kq + f)) and the adjoint equation is
// ṗ = -[D_q rhs]^{*P} p. The standard pairing gives
//   ż = -Kᵀ M⁻ᵀ z - [D_q f]ᵀ M⁻ᵀ z
// and the mass-matrix pairing gives
//   Mᵀ ṗ = -Kᵀ p - [D_q f]ᵀ p,
// related by the similarity z = Mᵀ p.

namespace adjlab {

class AdjointSystem {
 public:
  AdjointSystem(SemiDiscreteODE ode, DualityPairing pairing)
      : ode_(std::move(ode)), pairing_(std::move(pairing)) {}

  const SemiDiscreteODE& ode() const { return ode_; }
  const DualityPairing& pairing() const { return pairing_; }

  /// ṗ as induced by the pairing (see header comment for the three forms).
  Vec adjoint_rhs(double t, const Vec& q, const Vec& p) const {
    require_dim(q.size(), ode_.dim(), "adjoint_rhs state");
    require_dim(p.size(), ode_.dim(), "adjoint_rhs costate");
    switch (pairing_.kind()) {
      case PairingKind::Standard: {
        Vec w = ode_.mass_factored().solve_transpose(p);
        return -(ode_.linear().transpose() * w) -
               ode_.nonlinear_jacobian(t, q).transpose() * w;
      }
      case PairingKind::MassInduced: {
        Vec rhs = -(ode_.linear().transpose() * p) -
                  ode_.nonlinear_jacobian(t, q).transpose() * p;
        return ode_.mass_factored().solve_transpose(rhs);
      }
      case PairingKind::General: {
        // Similarity route through the standard adjoint: -P⁻ᵀ (Dg)ᵀ Pᵀ p.
        Vec w = ode_.mass_factored().solve_transpose(pairing_.apply_transpose(p));
        Vec u = -(ode_.linear().transpose() * w) -
                ode_.nonlinear_jacobian(t, q).transpose() * w;
        return pairing_.solve_transpose(u);
      }
    }
    throw std::logic_error("adjoint_rhs: unreachable");
  }

  /// H(t,q,p) = pair(p, rhs(t,q)).
  double hamiltonian(double t, const Vec& q, const Vec& p) const {
    return pairing_.pair(p, ode_.rhs(t, q));
  }

 private:
  SemiDiscreteODE ode_;
  DualityPairing pairing_;
};

inline AdjointSystem form_adjoint(SemiDiscreteODE ode, DualityPairing pairing) {
  require_same_dim(pairing.dim(), ode.dim(), "form_adjoint pairing/ode");
  if (pairing.kind() == PairingKind::MassInduced &&
      !pairing.matrix().isApprox(ode.mass(), 0.0)) {
    throw std::invalid_argument(
        "form_adjoint: mass-induced pairing matrix must equal the ODE mass matrix");
  }
  return AdjointSystem(std::move(ode), std::move(pairing));
}

/// Linearized dynamics δq̇ = M⁻¹(K + D_q f(t,q)) δq along a state q.
class VariationalSystem {
 public:
  explicit VariationalSystem(SemiDiscreteODE ode) : ode_(std::move(ode)) {}

  const SemiDiscreteODE& ode() const { return ode_; }

  Vec variational_rhs(double t, const Vec& q, const Vec& dq) const {
    require_dim(dq.size(), ode_.dim(), "variational_rhs perturbation");
    return ode_.mass_factored().solve(
        Vec(ode_.linear() * dq + ode_.nonlinear_jacobian(t, q) * dq));
  }

 private:
  SemiDiscreteODE ode_;
};

inline VariationalSystem form_variational(SemiDiscreteODE ode) {
  return VariationalSystem(std::move(ode));
}

enum class SimilarityDirection { StandardToMass, MassToStandard };

/// The diagram arrow z = Mᵀ p between the standard and mass-induced costates.
inline Vec similarity_transform(const Vec& z, const Mat& mass, SimilarityDirection direction) {
  require_square(mass, "similarity_transform mass");
  require_dim(z.size(), mass.rows(), "similarity_transform costate");
  if (direction == SimilarityDirection::MassToStandard) {
    return mass.transpose() * z;
  }
  FactoredMatrix m(mass, "similarity_transform mass");
  return m.solve_transpose(z);
}

/// The conserved quantity pair(p, δq); evaluation only, drift is measured by
/// the callers.
inline double pairing_invariant(const DualityPairing& pairing, const Vec& p, const Vec& dq) {
  return pairing.pair(p, dq);
}

}  // namespace adjlab
