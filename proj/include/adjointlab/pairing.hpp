#pragma once

#include <optional>
#include <string>
#include <utility>

#include "adjointlab/dense.hpp"

// Duality pairings on the semi-discrete coefficient space. A pairing is a
// nondegenerate bilinear form pair(w, v) = wᵀ P v; the adjoint of an operator
// B with respect to it is B* = P⁻ᵀ Bᵀ Pᵀ, so that pair(B* w, v) = pair(w, B v).
// The three kinds in play are the standard pairing (P = I), the mass-matrix
// pairing (P = M) that Galerkin semi-discretization induces, and a general
// invertible P.

namespace adjlab {

enum class PairingKind { Standard, MassInduced, General };

inline std::string to_string(PairingKind k) {
  switch (k) {
    case PairingKind::Standard: return "standard";
    case PairingKind::MassInduced: return "mass-induced";
    case PairingKind::General: return "general";
  }
  return "?";
}

class DualityPairing {
 public:
  static DualityPairing standard(Index dim) {
    if (dim <= 0) throw std::invalid_argument("DualityPairing: dim must be positive");
    return DualityPairing(PairingKind::Standard, dim, std::nullopt);
  }

  static DualityPairing mass_induced(Mat mass) {
    Index dim = mass.rows();
    return DualityPairing(PairingKind::MassInduced, dim,
                          FactoredMatrix(std::move(mass), "mass pairing matrix"));
  }

  static DualityPairing general(Mat p) {
    Index dim = p.rows();
    return DualityPairing(PairingKind::General, dim,
                          FactoredMatrix(std::move(p), "pairing matrix"));
  }

  PairingKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  bool is_standard() const { return kind_ == PairingKind::Standard; }

  /// The defining matrix (identity for the standard pairing).
  Mat matrix() const {
    if (is_standard()) return Mat::Identity(dim_, dim_);
    return factored_->matrix();
  }

  double rcond() const { return is_standard() ? 1.0 : factored_->rcond(); }

  /// pair(w, v) = wᵀ P v.
  double pair(const Vec& w, const Vec& v) const {
    require_dim(w.size(), dim_, "pair: w");
    require_dim(v.size(), dim_, "pair: v");
    if (is_standard()) return w.dot(v);
    return w.dot(factored_->matrix() * v);
  }

  /// Pᵀ x; identity for the standard pairing.
  Vec apply_transpose(const Vec& x) const {
    require_dim(x.size(), dim_, "apply_transpose");
    if (is_standard()) return x;
    return factored_->matrix().transpose() * x;
  }

  /// P⁻ᵀ x; identity for the standard pairing.
  Vec solve_transpose(const Vec& x) const {
    require_dim(x.size(), dim_, "solve_transpose");
    if (is_standard()) return x;
    return factored_->solve_transpose(x);
  }

  /// Adjoint of B with respect to this pairing: B* = P⁻ᵀ Bᵀ Pᵀ.
  Mat adjoint(const Mat& b) const {
    require_square(b, "adjoint: B");
    require_dim(b.rows(), dim_, "adjoint: B");
    if (is_standard()) return b.transpose();
    const Mat& p = factored_->matrix();
    Mat bt_pt = b.transpose() * p.transpose();
    return factored_->solve_transpose(bt_pt);
  }

 private:
  DualityPairing(PairingKind kind, Index dim, std::optional<FactoredMatrix> f)
      : kind_(kind), dim_(dim), factored_(std::move(f)) {}

  PairingKind kind_;
  Index dim_;
  std::optional<FactoredMatrix> factored_;  // engaged unless Standard
};

/// Operator P relating two pairings: pair_L(w, v) = pair_R(w, P v),
/// i.e. P = P_R⁻¹ P_L.
inline Mat relating_operator(const DualityPairing& left, const DualityPairing& right) {
  require_same_dim(left.dim(), right.dim(), "relating_operator");
  if (right.is_standard()) return left.matrix();
  FactoredMatrix pr(right.matrix(), "relating_operator: right pairing");
  return pr.solve(left.matrix());
}

/// Change-of-pairing formula for adjoints: B^{*L} = P^{-*R} B^{*R} P^{*R},
/// where P relates the pairings and *R denotes the right pairing's adjoint.
/// b_adjoint_r must be the adjoint of b with respect to the right pairing.
inline Mat operator_adjoint(const DualityPairing& left, const DualityPairing& right,
                            const Mat& b, const Mat& b_adjoint_r) {
  require_square(b, "operator_adjoint: B");
  require_same_dim(left.dim(), right.dim(), "operator_adjoint pairings");
  require_dim(b.rows(), left.dim(), "operator_adjoint: B");
  require_dim(b_adjoint_r.rows(), left.dim(), "operator_adjoint: B_adjoint_R");
  Mat p_star_r = right.adjoint(relating_operator(left, right));
  FactoredMatrix fac(std::move(p_star_r), "operator_adjoint: P^{*R}");
  return fac.solve(b_adjoint_r * fac.matrix());
}

}  // namespace adjlab
