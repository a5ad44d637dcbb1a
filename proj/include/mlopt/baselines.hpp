#pragma once

#include <functional>
#include <optional>

#include "mlopt/core.hpp"

// Comparison hypergradients: the explicit partial derivative of f1 (VGD) and
// central differences of the reduced value with re-solved lower levels (FD).

namespace mlopt {

struct FdHyperConfig {
  // Per-coordinate step is step * (1 + |x_k|).
  double step = 1e-3;
  // Inner schedule for the perturbed re-solves; the run's schedule if unset.
  std::optional<std::vector<int>> inner_schedule;
};

// Re-solves the lower levels for a given x1, warm-started from `warm`.
using LowerSolver = std::function<PointStack(const Vector& x1, const PointStack& warm)>;

// df1/dx1 at the current stack, ignoring every implicit dependence.
Vector vgd_gradient(const DerivativeOracle& f1, const PointStack& point);

// Central differences of x1 -> f1(x1, lower_solve(x1)), 2 d1 lower solves,
// each warm-started from `warm`.
Vector fd_hypergradient(const DerivativeOracle& f1, const Vector& x1, const PointStack& warm,
                        const LowerSolver& lower_solve, const FdHyperConfig& cfg = {});

}  // namespace mlopt
