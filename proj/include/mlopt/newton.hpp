#pragma once

#include "mlopt/core.hpp"

namespace mlopt {

struct NewtonOptions {
  double tol = 1e-11;
  int max_iters = 100;
};

// Minimizes f over x_level with every other level held fixed, using Newton
// steps on hess_block(level, level) with backtracking on the value. Stops
// once ||df/dx_level|| <= tol, when no step makes progress, or after
// max_iters. Returns the final gradient norm; the caller decides whether it
// is small enough.
double newton_minimize_block(const DerivativeOracle& f, PointStack& p, Index level,
                             const NewtonOptions& opts = {});

}  // namespace mlopt
