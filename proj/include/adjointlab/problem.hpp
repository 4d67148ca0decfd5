#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "adjointlab/dense.hpp"

// Built-in 1D semilinear evolution problems on [0,1]: q̇ = Aq + f(t,q) with
// A the linear (diffusion/advection) part and f the semilinearity.

namespace adjlab {

enum class ProblemKind { Heat, Advection, Burgers };
enum class BoundaryCondition { DirichletZero, Periodic };

inline std::string to_string(ProblemKind p) {
  switch (p) {
    case ProblemKind::Heat: return "heat";
    case ProblemKind::Advection: return "advection";
    case ProblemKind::Burgers: return "burgers";
  }
  return "?";
}

inline std::string to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::DirichletZero ? "dirichlet0" : "periodic";
}

/// Initial profiles constructible from configs. All are smooth on [0,1].
namespace profiles {

inline std::function<double(double)> gaussian(double amplitude = 1.0, double center = 0.5,
                                              double width = 0.1) {
  return [=](double x) {
    const double d = (x - center) / width;
    return amplitude * std::exp(-0.5 * d * d);
  };
}

/// amplitude * sin(frequency * pi * x). Integer frequency vanishes at both
/// endpoints; even frequency is 1-periodic.
inline std::function<double(double)> sine(double amplitude = 1.0, int frequency = 1) {
  return [=](double x) { return amplitude * std::sin(frequency * M_PI * x); };
}

inline std::function<double(double)> constant(double value) {
  return [=](double) { return value; };
}

}  // namespace profiles

struct EvolutionProblem {
  ProblemKind kind = ProblemKind::Heat;
  BoundaryCondition bc = BoundaryCondition::DirichletZero;
  double diffusion = 0.0;        // ν
  double advection_speed = 0.0;  // a
  std::function<double(double)> initial_condition = profiles::sine(1.0, 1);

  /// Enforces the per-problem coefficient constraints.
  void validate() const {
    switch (kind) {
      case ProblemKind::Heat:
        if (!(diffusion > 0.0)) {
          throw std::invalid_argument("heat problem requires diffusion nu > 0");
        }
        break;
      case ProblemKind::Advection:
        if (diffusion != 0.0) {
          throw std::invalid_argument("advection problem requires nu = 0");
        }
        break;
      case ProblemKind::Burgers:
        if (diffusion < 0.0) {
          throw std::invalid_argument("burgers problem requires nu >= 0");
        }
        break;
    }
    if (!initial_condition) {
      throw std::invalid_argument("evolution problem needs an initial condition");
    }
  }
};

inline EvolutionProblem heat_problem(double nu, BoundaryCondition bc = BoundaryCondition::DirichletZero,
                                     std::function<double(double)> ic = profiles::sine(1.0, 1)) {
  EvolutionProblem p;
  p.kind = ProblemKind::Heat;
  p.bc = bc;
  p.diffusion = nu;
  p.initial_condition = std::move(ic);
  p.validate();
  return p;
}

inline EvolutionProblem advection_problem(double speed,
                                          std::function<double(double)> ic = profiles::sine(1.0, 2)) {
  EvolutionProblem p;
  p.kind = ProblemKind::Advection;
  p.bc = BoundaryCondition::Periodic;
  p.advection_speed = speed;
  p.initial_condition = std::move(ic);
  p.validate();
  return p;
}

inline EvolutionProblem burgers_problem(double nu,
                                        std::function<double(double)> ic = profiles::gaussian()) {
  EvolutionProblem p;
  p.kind = ProblemKind::Burgers;
  p.bc = BoundaryCondition::DirichletZero;
  p.diffusion = nu;
  p.initial_condition = std::move(ic);
  p.validate();
  return p;
}

}  // namespace adjlab
