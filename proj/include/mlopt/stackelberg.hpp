#pragma once

#include "mlopt/quadratic.hpp"

// Three-firm Stackelberg game with linear demand P = 1 - x - y - z:
//   f1 = -x^T(1 - x - y - z), f2 = -y^T(1 - x - y - z), f3 = -z^T(1 - x - y - z)
// with x, y, z in R^d (coordinates decouple).

namespace mlopt {

struct StackelbergSpec {
  Index dim = 1;
};

// The game as a quadratic family (exact responses y* = (1-x)/2, z* = (1-x)/4).
QuadraticMultilevel stackelberg_model(const StackelbergSpec& spec);

MultilevelProblem build_stackelberg(const StackelbergSpec& spec);

// Leader optimum x* = 1/2.
Vector stackelberg_reference(const StackelbergSpec& spec);

}  // namespace mlopt
